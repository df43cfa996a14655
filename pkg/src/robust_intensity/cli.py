"""Command line interface: ``robust-intensity {simulate,estimate,experiment,median-figure,diagnostics}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import (JitterFunction, estimate_medianJ, estimate_medianJ2, estimate_std, estimate_voronoi)
from .experiments import (WORKERS_ENV, ConfigError, ExperimentAborted, bundled_config, calibrate_intensity,
                          default_workers, load_config, run_experiment, with_overrides, write_report)
from .geometry import PointPattern, Window
from .models import LGCP, MaternCluster, Poisson, PoissonHardCore, Thomas, simulate
from .randomness import substream
from .theory import clt_diagnostics, exact_jittered_median, poisson_median

log = logging.getLogger("robust_intensity")


class CLIError(Exception):
    pass


# --------------------------------------------------------------------------- pattern files


def write_pattern(pattern: PointPattern, path) -> None:
    """Plain text: ``# dim=2 n=<half_side> count=<m>`` then one ``x y`` line per point."""
    w = pattern.window
    if np.any(np.asarray(w.center) != 0):
        raise CLIError("pattern files store centred windows only")
    lines = [f"# dim={w.dim} n={w.half_side!r} count={len(pattern)}"]
    lines += [" ".join(format(v, ".16e") for v in p) for p in pattern.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pattern(path) -> PointPattern:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise CLIError(f"{path}: missing '# dim=.. n=.. count=..' header")
    try:
        head = dict(tok.split("=", 1) for tok in text[0][1:].split())
        dim, half, count = int(head["dim"]), float(head["n"]), int(head["count"])
    except (KeyError, ValueError):
        raise CLIError(f"{path}: malformed header {text[0]!r}") from None
    rows = [ln for ln in text[1:] if ln.strip() and not ln.startswith("#")]
    pts = np.array([[float(v) for v in ln.split()] for ln in rows]).reshape(-1, dim)
    if len(pts) != count:
        raise CLIError(f"{path}: header says {count} points, found {len(pts)}")
    return PointPattern(pts, Window(dim, half))


# --------------------------------------------------------------------------- model flags


def _add_model_flags(p):
    p.add_argument("--model", required=True, choices=["poisson", "lgcp", "thomas", "matern", "phc"])
    p.add_argument("--lambda", dest="lam", type=float, help="intensity (poisson, lgcp)")
    p.add_argument("--variance", type=float, default=0.5, help="lgcp field variance")
    p.add_argument("--scale", type=float, default=0.02, help="lgcp correlation scale")
    p.add_argument("--spacing", type=float, help="lgcp pixel side (default scale/2)")
    p.add_argument("--kappa", type=float, help="cluster parent intensity")
    p.add_argument("--alpha", type=float, help="mean offspring per parent")
    p.add_argument("--sigma", type=float, help="cluster spread")
    p.add_argument("--beta", type=float, help="hard-core activity")
    p.add_argument("--R", type=float, help="hard-core distance")
    p.add_argument("--mh-steps", type=int, help="hard-core birth-death steps")


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + ("lambda" if n == "lam" else n.replace("_", "-")) for n in missing)
        raise CLIError(f"--model {args.model} requires {flags}")


def model_from_args(args):
    try:
        if args.model == "poisson":
            _need(args, "lam")
            return Poisson(args.lam)
        if args.model == "lgcp":
            _need(args, "lam")
            return LGCP(args.variance, args.scale, args.lam, args.spacing)
        if args.model in ("thomas", "matern"):
            defaults = {"kappa": 25.0, "alpha": 4.0, "sigma": 0.03}
            vals = {k: getattr(args, k) if getattr(args, k) is not None else v for k, v in defaults.items()}
            return (Thomas if args.model == "thomas" else MaternCluster)(**vals)
        _need(args, "beta", "R")
        return PoissonHardCore(args.beta, args.R, args.mh_steps)
    except ValueError as exc:
        raise CLIError(str(exc)) from None


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    model = model_from_args(args)
    if not args.n > 0:
        raise CLIError("--n must be positive")
    pattern = simulate(model, Window(2, args.n), substream(args.seed, 0))
    write_pattern(pattern, args.output)
    print(len(pattern))
    return 0


def cmd_estimate(args) -> int:
    pattern = read_pattern(args.input)
    jitter = JitterFunction.parse(args.jitter)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["estimator", "param", "value"])
    for i, est in enumerate(args.estimator):
        if est == "std":
            out.writerow(["std", "", repr(estimate_std(pattern).value)])
        elif est in ("medianJ", "medianJ2"):
            fn = estimate_medianJ if est == "medianJ" else estimate_medianJ2
            for s in args.cells_per_side:
                # the same uniforms for both median estimators at a given s
                res = fn(pattern, s, jitter, substream(args.seed, 0).child(s))
                out.writerow([est, res.metadata["k_n"], repr(res.value)])
        else:
            for f in args.trim:
                try:
                    res = estimate_voronoi(pattern, args.grid, f)
                except ValueError as exc:
                    raise CLIError(f"voronoi: {exc}") from None
                out.writerow(["voronoi", format(f, "g"), repr(res.value)])
    return 0


def cmd_experiment(args) -> int:
    path = Path(args.config)
    if not path.exists():
        try:
            path = bundled_config(args.config)
        except FileNotFoundError:
            raise CLIError(f"config {args.config!r} not found (neither a file nor a bundled name)") from None
    configs = load_config(path)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.calibration_replications is not None:
        overrides["calibration_replications"] = args.calibration_replications
    configs = [with_overrides(c, **overrides) for c in configs]
    workers = args.workers if args.workers is not None else default_workers()
    reports = []
    for cfg in configs:
        log.info("running %s: %s, R=%d", cfg.name, cfg.model.kind, cfg.replications)
        reports.append(run_experiment(cfg, workers=workers))
    paths = write_report(reports, args.outdir, timing=args.timing, workers=workers)
    for key, p in paths.items():
        print(f"{key}: {p}")
    return 0


def median_figure_rows(nus, jitters):
    rows = []
    for nu in nus:
        row = {"nu": float(nu), "poisson_offset": float(poisson_median(nu) - nu)}
        for phi in jitters:
            row[f"jittered_offset_{phi.name}"] = exact_jittered_median(nu, phi).offset
        rows.append(row)
    return rows


def cmd_median_figure(args) -> int:
    if not 0 < args.nu_min <= args.nu_max:
        raise CLIError("need 0 < --nu-min <= --nu-max")
    nus = np.linspace(args.nu_min, args.nu_max, args.points)
    jitters = [JitterFunction.parse(p) for p in args.phi]
    rows = median_figure_rows(nus, jitters)
    with open(args.output, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) for k, v in r.items()})
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(nus, [r["poisson_offset"] for r in rows], lw=0.8, label="Poisson median")
        for phi in jitters:
            ax.plot(nus, [r[f"jittered_offset_{phi.name}"] for r in rows], lw=0.8, label=f"jittered, {phi.name}")
        ax.axhline(1 / 3, ls=":", c="k", lw=0.6)
        ax.axhline(-math.log(2), ls=":", c="k", lw=0.6)
        ax.set_xlabel("nu")
        ax.set_ylabel("median - nu")
        ax.legend(fontsize=8)
        fig.tight_layout()
        meta = {"Date": None} if args.deterministic else {}
        if args.deterministic:
            matplotlib.rcParams["svg.hashsalt"] = "robust-intensity"
        fig.savefig(args.plot, format="svg", metadata=meta)
        plt.close(fig)
    print(f"data: {args.output}" + (f"\nplot: {args.plot}" if args.plot else ""))
    return 0


def cmd_diagnostics(args) -> int:
    model = model_from_args(args)
    intensity = args.intensity
    if intensity is None and model.intensity is None:
        cal = calibrate_intensity(
            with_overrides(_dummy_config(model), master_seed=args.seed), replications=args.calibration_reps)
        intensity = cal["mean"]
    diags = clt_diagnostics(model, args.n, args.kn, args.reps, seed=args.seed, intensity=intensity)
    payload = [{**d.__dict__, "ecdf_target": d.ecdf_target, "variance_ratio_target": d.variance_ratio_target}
               for d in diags]
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return 0


def _dummy_config(model):
    from .experiments import ExperimentConfig

    return ExperimentConfig(model=model, replications=1)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-intensity", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one point pattern on [-n, n]^2")
    _add_model_flags(s)
    s.add_argument("--n", type=float, default=1.0, help="window half-side")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate the intensity of a pattern file")
    e.add_argument("input")
    e.add_argument("--estimator", nargs="+", default=["std", "medianJ"],
                   choices=["std", "medianJ", "medianJ2", "voronoi"])
    e.add_argument("--cells-per-side", type=int, nargs="+", default=[3, 4, 5, 6, 7])
    e.add_argument("--jitter", default="identity")
    e.add_argument("--grid", type=int, default=200, help="dummy points per side for the Voronoi estimator")
    e.add_argument("--trim", type=float, nargs="+", default=[0.05])
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="run a Monte Carlo experiment from a YAML config")
    x.add_argument("config", help="YAML file or bundled name (table1 ... table5)")
    x.add_argument("--outdir", default="results")
    x.add_argument("--seed", type=int, help="override master_seed")
    x.add_argument("--replications", type=int, help="override replications")
    x.add_argument("--calibration-replications", type=int)
    x.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    x.add_argument("--timing", action="store_true", help="write wall times to the records file")
    x.set_defaults(func=cmd_experiment)

    m = sub.add_parser("median-figure", help="exact medians of Poisson and jittered Poisson variables")
    m.add_argument("--nu-min", type=float, default=0.5)
    m.add_argument("--nu-max", type=float, default=100.0)
    m.add_argument("--points", type=int, default=2000)
    m.add_argument("--phi", nargs="+", default=["identity", "sqrt", "square"])
    m.add_argument("-o", "--output", required=True, help="CSV data file")
    m.add_argument("--plot", help="optional SVG plot")
    m.add_argument("--deterministic", action="store_true", help="strip timestamps from the plot")
    m.add_argument("--seed", type=int, default=0, help="accepted for uniformity; the solver is exact")
    m.set_defaults(func=cmd_median_figure)

    d = sub.add_parser("diagnostics", help="Monte Carlo checks of the limit laws")
    _add_model_flags(d)
    d.add_argument("--n", type=float, nargs="+", default=[1.0, 2.0, 4.0])
    d.add_argument("--kn", type=int, default=25)
    d.add_argument("--reps", type=int, default=1000)
    d.add_argument("--intensity", type=float, help="true intensity if the model has no closed form")
    d.add_argument("--calibration-reps", type=int, default=10_000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_diagnostics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CLIError, ExperimentAborted, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
