"""Command-line entry point: config parsing, experiment dispatch, artifacts.

Subcommands: env-check, variance-asymptotics, clt, ustat-limit,
partition-limit, chaos-moments, tightness, identities, all.  Each run writes
results.csv, a replayable manifest.json, and (unless --no-figures) rendered
figures into <out>/<experiment>/.  Exit code 0 iff every invoked test passed;
2 for malformed configuration or parameter-domain errors; 3 for resource
exhaustion.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import env_field as ef
from . import fractional_chaos as fc
from . import harness as hn
from . import report as rp
from . import ustat as us

COMMANDS = ("env-check", "variance-asymptotics", "clt", "ustat-limit",
            "partition-limit", "chaos-moments", "tightness", "identities",
            "all")

# desk-scale defaults: these match the acceptance battery
DEFAULTS = {
    "hurst": 0.75,
    "seed": 20260810,
    "threads": 0,
    "out": "results",
    "figures": True,
    "env-check": {"kernel_cutoff": 1_000_000, "k_tail": 1000,
                  "tail_tol": 0.05, "slope_k_hi": 10_000},
    "variance-asymptotics": {"n": 16384, "beta": 1.0,
                             "kernel_cutoff": 100_000,
                             "n_grid": (1024, 4096, 16384), "iid_n": 10_000},
    "clt": {"n": 4096, "beta": 1.0, "replicas": 2000, "kernel_cutoff": 512},
    "ustat-limit": {"n": 4096, "replicas": 2000, "kernel_cutoff": 4096,
                    "k": 1, "n_k2": 1024},
    "partition-limit": {"beta": 0.5, "kernel_cutoff": 8192,
                        "n_grid": (256, 512, 1024), "k_max": 4,
                        "mc_n": 256, "mc_beta": 1.0, "mc_replicas": 10_000,
                        "mc_kernel_cutoff": 512},
    "chaos-moments": {"beta": 0.5, "k_max": 4, "n_mc": 400_000},
    "tightness": {"n": 1024, "beta": 0.5, "replicas": 2000,
                  "kernel_cutoff": 256, "q": 2},
}

EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    """Flat key=value file with [sections], or a JSON object."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            return _flatten_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    out: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got "
                              f"{raw.strip()!r}")
        key, _, value = line.partition("=")
        full = f"{section}.{key.strip()}" if section else key.strip()
        out[full] = _coerce(value.strip())
    return out


def _flatten_json(obj: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in obj.items():
        full = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            flat.update(_flatten_json(value, full))
        else:
            flat[full] = tuple(value) if isinstance(value, list) else value
    return flat


def _coerce(value: str):
    if "," in value:
        return tuple(_coerce(v.strip()) for v in value.split(",") if v.strip())
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def _settings(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    cfg["env-check"] = dict(DEFAULTS["env-check"])
    for cmd in COMMANDS[:-2]:
        if cmd in DEFAULTS:
            cfg[cmd] = dict(DEFAULTS[cmd])
    if args.config:
        for key, value in load_config(args.config).items():
            if "." in key:
                section, sub = key.split(".", 1)
                if section not in cfg or not isinstance(cfg.get(section), dict):
                    raise ConfigError(f"unknown config section [{section}]")
                cfg[section][sub] = value
            else:
                cfg[key] = value
    for flag in ("seed", "threads", "out", "hurst"):
        val = getattr(args, flag)
        if val is not None:
            cfg[flag] = val
    if args.no_figures:
        cfg["figures"] = False
    for flag in ("n", "beta", "replicas"):
        val = getattr(args, flag)
        if val is not None:
            for cmd in COMMANDS[:-2]:
                if cmd in cfg and flag in cfg[cmd]:
                    cfg[cmd][flag] = val
    if not 0.5 < float(cfg["hurst"]) < 1.0:
        raise ConfigError(
            f"hurst={cfg['hurst']} violates the constraint 1/2 < H < 1")
    return cfg


def _env(cfg: dict, section: str, xi_dist: str = "gaussian") -> ef.EnvParams:
    return ef.EnvParams.calibrated(float(cfg["hurst"]),
                                   kernel_cutoff=int(cfg[section]["kernel_cutoff"]),
                                   xi_dist=xi_dist)


def _config(cfg, section, **over) -> hn.ExperimentConfig:
    sec = cfg[section]
    return hn.ExperimentConfig(
        experiment=section,
        env=over.pop("env", _env(cfg, section)),
        n=int(over.pop("n", sec.get("n", 1))),
        beta=float(over.pop("beta", sec.get("beta", 1.0))),
        replicas=int(over.pop("replicas", sec.get("replicas", 1000))),
        seed=int(cfg["seed"]), threads=int(cfg["threads"]),
        out_dir=cfg["out"], extra={**sec, **over})


# ---------------------------------------------------------------------------
# experiment runners


def run_env_check(cfg) -> list[hn.TestReport]:
    config = _config(cfg, "env-check", n=cfg["env-check"]["k_tail"])
    reports = hn.env_check(config)
    out_dir = os.path.join(cfg["out"], "env-check")
    if cfg["figures"]:
        params = config.env
        ks = np.unique(np.geomspace(8, params.kernel_cutoff // 4, 40).astype(int))
        gammas = [ef.exact_gamma(int(k), params) for k in ks]
        lam = ef.lambda_coefficient(params)
        asym = lam * ks ** (1.0 - 2 * params.alpha)
        rp.fig_gamma_tail(ks, gammas, asym, out_dir)
    return reports


def run_variance(cfg) -> list[hn.TestReport]:
    sec = cfg["variance-asymptotics"]
    config = _config(cfg, "variance-asymptotics")
    rep = hn.variance_asymptotics(config)
    iid_cfg = hn.ExperimentConfig(
        experiment="variance-iid", env=config.env, n=int(sec["iid_n"]),
        beta=1.0, seed=config.seed, threads=config.threads,
        extra={"band": (0.95, 1.05)})
    rep_iid = hn.iid_variance_control(iid_cfg)
    if cfg["figures"]:
        rp.fig_variance_ratio(rep.extras["curve"],
                              rep.extras["sigma2_stated"],
                              rep.extras["sigma2_exact"],
                              config.env.hurst,
                              os.path.join(cfg["out"], "variance-asymptotics"))
    return [rep, rep_iid]


def run_clt(cfg) -> list[hn.TestReport]:
    out = []
    for dist in ("gaussian", "rademacher"):
        config = _config(cfg, "clt", env=_env(cfg, "clt", dist))
        rep = hn.clt_check(config)
        out.append(rep)
        if cfg["figures"]:
            samples = np.asarray(rep.extras["samples"])
            ref = np.random.Generator(np.random.Philox(key=np.array(
                [config.seed, 0xF1], dtype=np.uint64))).normal(
                    0.0, rep.extras["sd_exact"], samples.size)
            rp.fig_ecdf_pair(samples, ref, (f"{dist} replicas", "normal law"),
                             f"clt_ecdf_{dist}.png",
                             os.path.join(cfg["out"], "clt"))
    return out


def run_ustat_limit(cfg) -> list[hn.TestReport]:
    sec = cfg["ustat-limit"]
    out = []
    config = _config(cfg, "ustat-limit")
    out.append(hn.ustat_limit_check(config, 1))
    base = fc.RectFn(0.0, 1.0, 0.0, 1.0)
    gprime = base.unit(config.env.hurst)
    config2 = _config(cfg, "ustat-limit", n=int(sec["n_k2"]))
    out.append(hn.ustat_limit_check(
        config2, 2, kernel=fc.TensorKernel.from_power(gprime, 2)))
    if cfg["figures"]:
        for rep, tag in zip(out, ("k1", "k2")):
            rp.fig_ecdf_pair(rep.extras["samples"], rep.extras["limit_samples"],
                             ("scaled statistic", "multiple integral"),
                             f"ustat_ecdf_{tag}.png",
                             os.path.join(cfg["out"], "ustat-limit"))
    return out


def run_partition_limit(cfg) -> list[hn.TestReport]:
    sec = cfg["partition-limit"]
    config = _config(cfg, "partition-limit", n=int(sec["n_grid"][-1]))
    rep = hn.partition_limit_check(config)
    mc_env = ef.EnvParams.calibrated(float(cfg["hurst"]),
                                     kernel_cutoff=int(sec["mc_kernel_cutoff"]))
    mc_cfg = hn.ExperimentConfig(
        experiment="partition-mc", env=mc_env, n=int(sec["mc_n"]),
        beta=float(sec["mc_beta"]), replicas=int(sec["mc_replicas"]),
        seed=int(cfg["seed"]), threads=int(cfg["threads"]))
    rep_mc = hn.partition_mc_check(mc_cfg)
    if cfg["figures"]:
        rp.fig_partition_trend(rep.extras["rows"], rep.extras["chaos_stated"],
                               rep.extras["chaos_exact_coupling"],
                               os.path.join(cfg["out"], "partition-limit"))
    return [rep, rep_mc]


def run_chaos_moments(cfg) -> list[hn.TestReport]:
    config = _config(cfg, "chaos-moments", n=1)
    rep, res = hn.chaos_moment_report(config)
    if cfg["figures"]:
        rp.fig_chaos_moments(res["terms"],
                             os.path.join(cfg["out"], "chaos-moments"))
    return [rep]


def run_tightness(cfg) -> list[hn.TestReport]:
    sec = cfg["tightness"]
    config = _config(cfg, "tightness")
    rep = hn.tightness_check(config, q=int(sec["q"]))
    if cfg["figures"]:
        rp.fig_tightness(rep.extras, os.path.join(cfg["out"], "tightness"))
    return [rep]


def run_identities(cfg) -> list[hn.TestReport]:
    return hn.identity_suite(seed=int(cfg["seed"]), threads=int(cfg["threads"]))


RUNNERS = {
    "env-check": run_env_check,
    "variance-asymptotics": run_variance,
    "clt": run_clt,
    "ustat-limit": run_ustat_limit,
    "partition-limit": run_partition_limit,
    "chaos-moments": run_chaos_moments,
    "tightness": run_tightness,
    "identities": run_identities,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polymer-limits",
        description="Desk-scale checks for polymer partition scaling limits "
                    "in a long-range-correlated environment.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=f"run the {cmd} battery")
        p.add_argument("--config", help="key=value or JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--hurst", type=float, default=None)
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage()
        return EXIT_CONFIG
    try:
        cfg = _settings(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    commands = COMMANDS[:-1] if args.command == "all" else (args.command,)
    all_reports = []
    try:
        for cmd in commands:
            reports = RUNNERS[cmd](cfg)
            all_reports.extend(reports)
            out_dir = os.path.join(cfg["out"], cmd)
            rp.write_results_csv(reports, os.path.join(out_dir, "results.csv"))
            rp.write_manifest(
                {"command": cmd, "settings": cfg,
                 "argv": list(argv) if argv is not None else sys.argv[1:]},
                os.path.join(out_dir, "manifest.json"))
            for rep in reports:
                status = "pass" if rep.passed else "FAIL"
                print(f"[{status}] {rep.name}: {rep.statistic}="
                      f"{rep.value:.6g} (threshold {rep.threshold}, "
                      f"{rep.runtime_ms:.0f} ms)")
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ef.ResourceError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    rp.write_results_csv(all_reports, os.path.join(cfg["out"], "results.csv"))
    return 0 if all(r.passed for r in all_reports) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
