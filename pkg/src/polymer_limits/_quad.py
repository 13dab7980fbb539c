"""Panel Gauss-Legendre quadrature with dyadic refinement toward marked points."""

from __future__ import annotations

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def panels(a: float, b: float, refine: tuple[float, ...] = (),
           min_width: float = 1e-10, uniform: int = 0) -> list[tuple[float, float]]:
    """Split [a, b] into panels, dyadically shrinking toward each refine point.

    Refine points must lie in [a, b]; they become panel endpoints that the
    subdivision approaches geometrically, which lets the quadrature resolve
    integrable singularities and sharp peaks.  `uniform` > 0 additionally
    pre-splits [a, b] into that many equal panels (for oscillatory factors).
    """
    marks = {a, b, *(p for p in refine if a < p < b)}
    if uniform > 0:
        marks.update(np.linspace(a, b, uniform + 1).tolist())
    cuts = sorted(marks)
    refine_set = set(refine)
    out: list[tuple[float, float]] = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        left_sing = lo in refine_set
        right_sing = hi in refine_set
        seg = [(lo, hi)]
        if left_sing or right_sing:
            seg = []
            width = hi - lo
            if left_sing and right_sing:
                mid = 0.5 * (lo + hi)
                seg.extend(_dyadic(lo, mid, toward_left=True, min_width=min_width))
                seg.extend(_dyadic(mid, hi, toward_left=False, min_width=min_width))
            elif left_sing:
                seg.extend(_dyadic(lo, hi, toward_left=True, min_width=min_width))
            else:
                seg.extend(_dyadic(lo, hi, toward_left=False, min_width=min_width))
            del width
        out.extend(seg)
    return out


def _dyadic(lo: float, hi: float, toward_left: bool, min_width: float):
    segs = []
    width = hi - lo
    while width > min_width:
        width *= 0.5
        if toward_left:
            segs.append((lo + width, lo + 2 * width))
        else:
            segs.append((hi - 2 * width, hi - width))
    if toward_left:
        segs.append((lo, lo + width))
    else:
        segs.append((hi - width, hi))
    return segs


def integrate(f, a: float, b: float, refine: tuple[float, ...] = (),
              min_width: float = 1e-10, order: int = 48, uniform: int = 0) -> float:
    """Integrate a vectorized callable over [a, b] with panel Gauss-Legendre."""
    x, w = nodes(a, b, refine=refine, min_width=min_width, order=order,
                 uniform=uniform)
    return float(np.dot(w, f(x)))


def nodes(a: float, b: float, refine: tuple[float, ...] = (),
          min_width: float = 1e-10, order: int = 48, uniform: int = 0):
    """All quadrature nodes and weights for the refined panel decomposition."""
    t, wt = _gl_nodes(order)
    xs = []
    ws = []
    for lo, hi in panels(a, b, refine=refine, min_width=min_width,
                         uniform=uniform):
        h = 0.5 * (hi - lo)
        xs.append(0.5 * (lo + hi) + h * t)
        ws.append(h * wt)
    return np.concatenate(xs), np.concatenate(ws)
