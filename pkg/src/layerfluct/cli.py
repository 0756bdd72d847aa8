"""Command line runner: one subcommand per experiment.

    layerfluct <experiment> [--config FILE] [--seed S] [--out DIR] [--threads N]
                            [--set key=value ...]

Artifacts go to ``<out>/<experiment>/``: ``verdict.json`` (named checks),
``metrics.json``, one CSV per table, experiment-specific files, and a
``manifest.json`` with the config hash, versions, wall time and artifact
hashes.  Exit code is 0 iff every check passed, 1 if a check failed, 2 on a
configuration error and 3 when a run aborted.
"""
import argparse
import inspect
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import particle
from .config import (EXPERIMENTS, ConfigError, build_config, dump_json, parse_config_text,
                     write_manifest)
from .profile import default_grid_size
from .reaction import reaction_from_config

CLAIMS = {
    "standing-wave": "The standing wave of the cubic reaction is tanh(z / sqrt 2).",
    "constants": "Interface constants: c2 vanishes for balanced reactions, c3 and the "
                 "off-interface variance take their closed-form values.",
    "traveling-wave": "Balanced reactions select zero speed; the linearized wave operator is "
                      "symmetric in the exponentially weighted space and annihilates U0'.",
    "profile-sweep": "The periodic profile approaches the glued standing wave at the stated "
                     "rates in K.",
    "spectrum-sweep": "One eigenvalue vanishes (translation), one is exponentially small in "
                      "sqrt K (layer interaction), the rest stay bounded away from zero.",
    "semigroup": "The stretched linear semigroup collapses onto the translation direction.",
    "spde-linear": "The slow component of the linear fluctuation field is a Brownian motion "
                   "with variance rate c*^2 along the translation direction.",
    "spde-limit": "The interface field is an Ornstein-Uhlenbeck process per Fourier mode; the "
                  "cubic drift keeps it bounded.",
    "offsite": "Away from the interface the field is pointwise Gaussian with variance "
               "sigma^2 and decorrelates in space.",
    "gk-run": "The particle chain has the predicted quadratic variation and drift identities.",
    "interface-track": "A layer in the particle density can be followed over time.",
}


def _kwargs(fn, cfg, mapping):
    """Driver keyword arguments from config fields plus matching extra params."""
    sig = inspect.signature(fn).parameters
    kw = {k: v for k, v in mapping.items() if v is not None}
    for k, v in cfg.params.items():
        if k in ("assert_checks", "trajectory", "semigroup"):
            continue
        if k not in sig:
            raise ConfigError(f"parameter {k!r} is not understood by {cfg.experiment}")
        kw[k] = v
    return kw


def _merge(name, parts):
    res = ex.ExperimentResult(name)
    for p in parts:
        res.checks += [ex.Check(f"[{p.name}] {c.name}", c.value, c.bound, c.passed)
                       for c in p.checks]
        res.metrics[p.name] = p.metrics
        res.tables.update(p.tables)
    return res


def run_constants(cfg):
    r = reaction_from_config(cfg.reaction)
    parts = [ex.check_constants(r)]
    if r.name == "cubic":
        parts.insert(0, ex.check_standing_wave(r))
    if r.is_balanced():
        parts.append(ex.check_traveling_wave(balanced=r, seed=cfg.seed))
    return _merge("constants", parts)


def run_profile_sweep(cfg):
    fn = ex.check_profile_sweep
    return fn(**_kwargs(fn, cfg, {"reaction": reaction_from_config(cfg.reaction),
                                  "Ks": cfg.K_sweep, "n": cfg.n, "threads": cfg.threads}))


def run_spectrum_sweep(cfg):
    fn = ex.check_spectrum_sweep
    r = reaction_from_config(cfg.reaction)
    res = fn(**_kwargs(fn, cfg, {"reaction": r, "Ks": cfg.K_sweep, "n": cfg.n,
                                 "threads": cfg.threads}))
    if cfg.params.get("semigroup", True):
        Ks = cfg.K_sweep or (100, 400, 1600)
        ns = [min(2048, max(1024, default_grid_size(K))) for K in Ks]
        sg = ex.check_semigroup(r, Ks=Ks, ns=ns, seed=cfg.seed, threads=cfg.threads)
        res = _merge("spectrum-sweep", [res, sg])
    return res


def run_spde_linear(cfg):
    fn = ex.check_linear_fluctuations
    if cfg.d not in (None, 1):
        raise ConfigError("spde-linear runs in d = 1 (the channel check uses its own d = 2 strip)")
    return fn(**_kwargs(fn, cfg, {"reaction": reaction_from_config(cfg.reaction), "K": cfg.K,
                                  "T": cfg.T, "dt": cfg.dt, "paths": cfg.paths,
                                  "seed": cfg.seed, "n": cfg.n}))


def run_spde_limit(cfg):
    fn = ex.check_limit_interface
    if cfg.d not in (None, 2):
        raise ConfigError("spde-limit is set up for d = 2 (a field on the circle)")
    return fn(**_kwargs(fn, cfg, {"reaction": reaction_from_config(cfg.reaction), "T": cfg.T,
                                  "dt": cfg.dt, "paths": cfg.paths, "n": cfg.n,
                                  "seed": cfg.seed}))


def run_offsite(cfg):
    fn = ex.check_offsite
    return fn(**_kwargs(fn, cfg, {"K": cfg.K, "T": cfg.T, "dt": cfg.dt, "paths": cfg.paths,
                                  "n": cfg.n, "seed": cfg.seed}))


def run_gk(cfg):
    fn = ex.check_particle_diagnostics
    if cfg.d not in (None, 1):
        raise ConfigError("gk-run diagnostics are set up for d = 1")
    rates = particle.rate_family_from_id(cfg.rates, 1)
    return fn(**_kwargs(fn, cfg, {"rates": rates, "N": cfg.N, "K": cfg.K, "T": cfg.T,
                                  "seed": cfg.seed}))


def run_interface_track(cfg):
    fn = ex.track_gk_interface
    if cfg.d not in (None, 1):
        raise ConfigError("interface-track is set up for d = 1")
    rates = particle.rate_family_from_id(cfg.rates, 1)
    traj = None
    if "trajectory" in cfg.params:
        traj = particle.read_trajectory(cfg.params["trajectory"])
    return fn(**_kwargs(fn, cfg, {"rates": rates, "N": cfg.N, "K": cfg.K, "T": cfg.T,
                                  "seed": cfg.seed, "traj": traj}))


RUNNERS = {
    "constants": run_constants,
    "profile-sweep": run_profile_sweep,
    "spectrum-sweep": run_spectrum_sweep,
    "spde-linear": run_spde_linear,
    "spde-limit": run_spde_limit,
    "offsite": run_offsite,
    "gk-run": run_gk,
    "interface-track": run_interface_track,
}


def _write_table(path, header, rows):
    np.savetxt(path, np.atleast_2d(rows), delimiter=",", header=",".join(header), comments="",
               fmt="%.17g")


def persist(res, cfg, outdir):
    """Write verdict, metrics, tables and experiment files; return the artifact paths."""
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    p = outdir / "verdict.json"
    verdict = res.verdict()
    verdict["claims"] = {k: CLAIMS[k] for k in _claim_keys(res)}
    dump_json(verdict, p)
    files.append(p)
    p = outdir / "metrics.json"
    dump_json(res.metrics, p)
    files.append(p)
    for name, (header, rows) in sorted(res.tables.items()):
        p = outdir / f"{name}.csv"
        _write_table(p, header, rows)
        files.append(p)
    traj = getattr(res, "trajectory", None)
    if traj is not None:
        p = outdir / "trajectory.bin"
        particle.write_trajectory(p, traj)
        files.append(p)
        q = outdir / "density.csv"
        particle.trajectory_to_csv(p, q)
        files.append(q)
    return files


def _claim_keys(res):
    keys = {res.name}
    for c in res.checks:
        if c.name.startswith("["):
            keys.add(c.name[1:c.name.index("]")])
    return sorted(k for k in keys if k in CLAIMS)


def run_report(cfg):
    """Collect every verdict under the output directory into report.json and report.md."""
    root = Path(cfg.out)
    rows = []
    for vpath in sorted(root.glob("*/verdict.json")):
        if vpath.parent.name == "report":
            continue
        v = json.loads(vpath.read_text())
        rows.append(v)
    res = ex.ExperimentResult("report")
    res.check("experiments found", len(rows), len(rows) > 0, "> 0")
    res.check("experiments failing", sum(not v["passed"] for v in rows),
              all(v["passed"] for v in rows), "== 0")
    lines = ["# Verdicts", ""]
    for v in rows:
        lines.append(f"## {v['experiment']}: {'PASS' if v['passed'] else 'FAIL'}")
        for k, text in v.get("claims", {}).items():
            lines.append(f"- claim ({k}): {text}")
        for c in v["checks"]:
            flag = "PASS" if c["passed"] else "FAIL"
            lines.append(f"  - {flag} {c['name']}: {c['value']:.6g} ({c['bound']})")
        lines.append("")
    res.metrics["experiments"] = rows
    res.report_md = "\n".join(lines)
    return res


def run(cfg):
    """Execute the configured experiment and write its artifacts; returns (result, files)."""
    t0 = time.perf_counter()
    outdir = Path(cfg.out) / cfg.experiment
    if cfg.experiment == "report":
        res = run_report(cfg)
        files = persist(res, cfg, outdir)
        p = outdir / "report.md"
        p.write_text(res.report_md + "\n")
        files.append(p)
    else:
        res = RUNNERS[cfg.experiment](cfg)
        files = persist(res, cfg, outdir)
    passed = res.passed if cfg.params.get("assert_checks", True) else True
    write_manifest(outdir, cfg, files, time.perf_counter() - t0, passed)
    return res, files


def _parse_set(items):
    raw = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        raw.update(parse_config_text(item))
    return raw


def main(argv=None):
    ap = argparse.ArgumentParser(prog="layerfluct", description=__doc__.split("\n")[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--seed", type=int, help="nonnegative integer seed (overrides config)")
    ap.add_argument("--out", help="output directory (overrides config)")
    ap.add_argument("--threads", type=int, help="worker threads for sweep members")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override any config key")
    args = ap.parse_args(argv)
    try:
        raw = parse_config_text(Path(args.config).read_text()) if args.config else {}
        if raw.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {args.experiment!r}")
        raw["experiment"] = args.experiment
        raw.update(_parse_set(args.set))
        cfg = build_config(raw, {"seed": args.seed, "out": args.out, "threads": args.threads})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        res, files = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"{cfg.experiment} aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for c in res.checks:
        print(c.line())
    print(f"{cfg.experiment}: {'PASS' if res.passed else 'FAIL'} -> {Path(cfg.out) / cfg.experiment}")
    if not cfg.params.get("assert_checks", True):
        return 0
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
