"""Result serialization: delimited output, run manifests, and figures.

Every experiment writes one results.csv (schema: experiment,n,beta,H,
statistic,value,se,threshold,pass,seed,runtime_ms), a replayable JSON
manifest, and, unless disabled, a small set of matplotlib figures rendered
next to the delimited output.  `hash_results` digests the CSV with volatile
columns (runtimes) removed, which is what the determinism check compares.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

CSV_COLUMNS = ["experiment", "n", "beta", "H", "statistic", "value", "se",
               "threshold", "pass", "seed", "runtime_ms"]


def write_results_csv(reports, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row())
    return path


def write_manifest(manifest: dict, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def hash_results(path: str, exclude: tuple[str, ...] = ("runtime_ms",)) -> str:
    """SHA-256 of the CSV content with volatile columns dropped."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    buf = io.StringIO()
    cols = [c for c in CSV_COLUMNS if c not in exclude]
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


# ---------------------------------------------------------------------------
# figures


def _save(fig, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def fig_gamma_tail(ks, gammas, asymptote, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.loglog(ks, gammas, "o-", ms=3, label="covariance")
    ax.loglog(ks, asymptote, "--", label="power-law asymptote")
    ax.set_xlabel("lag k")
    ax.set_ylabel(r"$\gamma(k)$")
    ax.legend(frameon=False)
    ax.set_title("covariance tail vs asymptote")
    return _save(fig, out_dir, "gamma_tail.png")


def fig_variance_ratio(curve, sigma2_stated, sigma2_exact, hurst,
                       out_dir: str) -> str:
    ns = np.array([c[0] for c in curve], dtype=float)
    a2 = np.array([c[1] for c in curve])
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.semilogx(ns, a2 / (sigma2_stated * ns ** hurst), "o-",
                label="ratio to stated constant")
    ax.semilogx(ns, a2 / (sigma2_exact * ns ** hurst), "s-",
                label="ratio to exact constant")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.axhspan(0.9, 1.1, color="0.9")
    ax.set_xlabel("n")
    ax.set_ylabel(r"$A_n^2 / (\sigma^2 n^H)$")
    ax.legend(frameon=False)
    ax.set_title("energy-variance growth")
    return _save(fig, out_dir, "variance_ratio.png")


def fig_ecdf_pair(sample_a, sample_b, labels, name, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for data, label in zip((sample_a, sample_b), labels):
        xs = np.sort(np.asarray(data))
        ax.step(xs, np.arange(1, xs.size + 1) / xs.size, where="post",
                label=label, lw=1.0)
    ax.set_xlabel("value")
    ax.set_ylabel("ECDF")
    ax.legend(frameon=False)
    return _save(fig, out_dir, name)


def fig_partition_trend(rows, chaos_stated, chaos_exact, out_dir: str) -> str:
    ns = [r["n"] for r in rows]
    vals = [r["comparand"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.semilogx(ns, vals, "o-", label="scaled second moment")
    ax.axhline(chaos_stated, color="C1", ls="--",
               label="chaos sum, stated coupling")
    ax.axhline(chaos_exact, color="C2", ls=":",
               label="chaos sum, plain coupling")
    ax.set_xlabel("n")
    ax.set_ylabel(r"$n\,E[z_n(n,0)^2]/4$")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, out_dir, "partition_trend.png")


def fig_chaos_moments(moments, out_dir: str) -> str:
    ks = [m.k for m in moments]
    vals = [m.estimate for m in moments]
    errs = [m.se for m in moments]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.bar(ks, vals, yerr=errs, color="C0")
    ax.set_yscale("log")
    ax.set_xlabel("chaos order k")
    ax.set_ylabel("second-moment contribution")
    return _save(fig, out_dir, "chaos_moments.png")


def fig_tightness(extras, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for key, skey, label in (("time_sep", "time_moments", "time"),
                             ("space_sep", "space_moments", "space")):
        sep = np.asarray(extras[key])
        mom = np.asarray(extras[skey])
        ax.loglog(sep, mom, "o-", label=f"{label} increments")
    ax.set_xlabel("separation")
    ax.set_ylabel("increment moment")
    ax.legend(frameon=False)
    return _save(fig, out_dir, "tightness_increments.png")
