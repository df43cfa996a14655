"""Monte Carlo engine: model x setting x estimator grids over seeded replications.

Every replication ``r`` draws from ``substream(master_seed, r)`` and its
children, so the records do not depend on how replications are spread over
workers. Within a replication, for window index ``i``:

* ``child(i, 0)``      simulates the base pattern,
* ``child(i, 1, j)``   drives contamination setting ``j``,
* ``child(i, 2, s)``   draws the jitter uniforms for ``s`` cells per side.

The jitter stream does not depend on the setting, so all settings of a
replication share both the base pattern and the jitter uniforms.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .contamination import (ContaminationConfig, Pure, contaminate, contamination_from_dict,
                            contamination_to_dict)
from .estimators import IDENTITY, EstimatorResult, JitterFunction, estimate_std, median_family, voronoi_family
from .geometry import Window
from .models import ModelConfig, PoissonHardCore, model_from_dict, model_to_dict, simulate
from .randomness import substream
from .theory import gain

log = logging.getLogger(__name__)

WORKERS_ENV = "ROBUST_INTENSITY_WORKERS"
RECORD_COLUMNS = ("model", "n", "rep", "setting", "rho", "estimator", "param", "value", "seconds",
                  "base_digest")
AGGREGATE_COLUMNS = ("model", "n", "setting", "rho", "estimator", "param", "mean", "sd", "bias", "mse",
                     "gain_pct")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the offending field path."""


class ExperimentAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class VoronoiOptions:
    grid_per_side: int = 200
    trim_fs: tuple[float, ...] = (0.025, 0.05, 0.1)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    half_sides: tuple[float, ...] = (1.0, 2.0)
    replications: int = 1000
    settings: tuple[ContaminationConfig, ...] = (Pure(),)
    median_cells_per_side: tuple[int, ...] = (3, 4, 5, 6, 7)
    rule_of_thumb: bool = False
    voronoi: VoronoiOptions | None = None
    jitter: JitterFunction = IDENTITY
    master_seed: int = 0
    reference_intensity: float | None = None
    calibration_replications: int = 10_000
    max_failure_fraction: float = 0.01
    name: str = "experiment"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications: must be >= 1")
        if not self.settings:
            object.__setattr__(self, "settings", (Pure(),))
        for i, s in enumerate(self.median_cells_per_side):
            if int(s) != s or s < 2:
                raise ConfigError(f"median_cells_per_side[{i}]: need an integer >= 2, got {s!r}")
        if not self.half_sides:
            raise ConfigError("window_half_sides: at least one window needed")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": model_to_dict(self.model),
            "window_half_sides": list(self.half_sides),
            "replications": self.replications,
            "settings": [contamination_to_dict(s) for s in self.settings],
            "median_cells_per_side": list(self.median_cells_per_side),
            "rule_of_thumb": self.rule_of_thumb,
            "voronoi": None if self.voronoi is None else {
                "grid_per_side": self.voronoi.grid_per_side, "trim_fs": list(self.voronoi.trim_fs)},
            "jitter": self.jitter.name,
            "master_seed": self.master_seed,
            "reference_intensity": self.reference_intensity,
            "calibration_replications": self.calibration_replications,
            "max_failure_fraction": self.max_failure_fraction,
        }

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class Record:
    model: str
    n: float
    rep: int
    setting: str
    rho: float
    estimator: str
    param: str
    value: float
    seconds: float
    base_digest: str
    error: str | None = None

    def key(self) -> tuple:
        """Everything except the wall time."""
        return (self.model, self.n, self.rep, self.setting, self.rho, self.estimator, self.param,
                self.value, self.base_digest, self.error)


@dataclass(frozen=True)
class AggregateRow:
    model: str
    n: float
    setting: str
    rho: float
    estimator: str
    param: str
    mean: float
    sd: float
    bias: float
    mse: float
    gain_pct: float | None
    count: int
    gain_flag: str = ""


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list[Record]
    reference_intensity: float | None
    calibration: dict | None = None
    failures: int = 0

    def aggregates(self) -> list[AggregateRow]:
        return aggregate(self)

    def values(self, estimator: str, n: float, setting: str = "A", rho: float = 0.0, param: str = "") -> np.ndarray:
        return np.array([r.value for r in self.records
                         if r.estimator == estimator and r.n == n and r.setting == setting
                         and r.rho == rho and r.param == param and r.error is None])


# --------------------------------------------------------------------------- config parsing


def _req(data: dict, key: str, path: str):
    if key not in data:
        raise ConfigError(f"{path}{key}: required field missing")
    return data[key]


def config_from_dict(data: dict) -> list[ExperimentConfig]:
    """One :class:`ExperimentConfig` per model listed in the document."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    known = {"name", "model", "models", "window_half_sides", "replications", "settings",
             "median_cells_per_side", "rule_of_thumb", "voronoi", "jitter", "master_seed",
             "reference_intensity", "calibration_replications", "max_failure_fraction"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    if "models" in data:
        models_raw = data["models"]
        base = "models"
    else:
        models_raw = [_req(data, "model", "")]
        base = "model"
    if not isinstance(models_raw, list) or not models_raw:
        raise ConfigError(f"{base}: expected a non-empty list")
    models = []
    for i, m in enumerate(models_raw):
        path = f"{base}[{i}]" if base == "models" else base
        if not isinstance(m, dict):
            raise ConfigError(f"{path}: expected a mapping")
        try:
            models.append(model_from_dict(m))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    settings = []
    for i, s in enumerate(data.get("settings") or []):
        try:
            settings.append(contamination_from_dict(s))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"settings[{i}]: {exc}") from None

    vor = data.get("voronoi")
    if vor is not None:
        if not isinstance(vor, dict):
            raise ConfigError("voronoi: expected a mapping or null")
        try:
            vor = VoronoiOptions(int(vor.get("grid_per_side", 200)),
                                 tuple(float(f) for f in vor.get("trim_fs", (0.025, 0.05, 0.1))))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"voronoi: {exc}") from None
        for i, f in enumerate(vor.trim_fs):
            if not 0 <= f < 0.5:
                raise ConfigError(f"voronoi.trim_fs[{i}]: must lie in [0, 0.5)")

    def number(key, default, kind=float):
        val = data.get(key, default)
        if val is None:
            return None
        try:
            return kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {val!r}") from None

    def number_list(key, default, kind=float):
        vals = data.get(key, default)
        if not isinstance(vals, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        out = []
        for i, v in enumerate(vals):
            try:
                out.append(kind(v))
            except (TypeError, ValueError):
                raise ConfigError(f"{key}[{i}]: expected a number, got {v!r}") from None
        return tuple(out)

    try:
        jitter = JitterFunction.parse(data.get("jitter", "identity"))
    except ValueError as exc:
        raise ConfigError(f"jitter: {exc}") from None

    common = dict(
        half_sides=number_list("window_half_sides", [1.0, 2.0]),
        replications=number("replications", 1000, int),
        settings=tuple(settings) or (Pure(),),
        median_cells_per_side=number_list("median_cells_per_side", [3, 4, 5, 6, 7], int),
        rule_of_thumb=bool(data.get("rule_of_thumb", False)),
        voronoi=vor,
        jitter=jitter,
        master_seed=number("master_seed", 0, int),
        reference_intensity=number("reference_intensity", None),
        calibration_replications=number("calibration_replications", 10_000, int),
        max_failure_fraction=number("max_failure_fraction", 0.01),
        name=str(data.get("name", "experiment")),
    )
    return [ExperimentConfig(model=m, **common) for m in models]


def load_config(path) -> list[ExperimentConfig]:
    import yaml

    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"<root>: not a valid YAML document ({exc})") from None
    return config_from_dict(data)


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (``table1`` ... ``table5``)."""
    stem = Path(name).stem
    path = Path(__file__).parent / "configs" / f"{stem}.yaml"
    if not path.exists():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return path


# --------------------------------------------------------------------------- engine


def _timed(fn, *args):
    t0 = time.perf_counter()
    try:
        out = fn(*args)
        err = None
    except (ValueError, ArithmeticError) as exc:
        out, err = None, str(exc)
    return out, time.perf_counter() - t0, err


def _param(result: EstimatorResult) -> str:
    if result.estimator_id in ("medianJ", "medianJ2"):
        return str(result.metadata["k_n"])
    if result.estimator_id == "voronoi":
        return format(result.metadata["trim_f"], "g")
    return ""


def run_replication(config: ExperimentConfig, rep: int) -> list[Record]:
    """All records of one replication; a pure function of ``(config, rep)``."""
    rep_stream = substream(config.master_seed, rep)
    out: list[Record] = []
    for i, n in enumerate(config.half_sides):
        window = Window(2, float(n))
        base = simulate(config.model, window, rep_stream.child(i, 0))
        digest = base.digest()
        for j, setting in enumerate(config.settings):
            pattern = contaminate(base, setting, rep_stream.child(i, 1, j))
            label = {"pure": "A", "add": "B", "delete": "C"}[setting.kind]
            rho = float(setting.rho)

            def emit(est, param, value, secs, err=None):
                out.append(Record(config.model.kind, float(n), rep, label, rho, est, param,
                                  float("nan") if value is None else float(value), secs, digest, err))

            res, secs, err = _timed(estimate_std, pattern)
            emit("std", "", res.value if res else None, secs, err)
            for s in config.median_cells_per_side:
                res, secs, err = _timed(median_family, pattern, s, config.jitter, rep_stream.child(i, 2, s))
                k = str(s * s)
                emit("medianJ", k, res[0].value if res else None, secs, err)
                if config.rule_of_thumb:
                    emit("medianJ2", k, res[1].value if res else None, 0.0, err)
            if config.voronoi is not None:
                vopt = config.voronoi
                if len(pattern) == 0:
                    res, secs, err = None, 0.0, "no interior cells"
                else:
                    res, secs, err = _timed(voronoi_family, pattern, vopt.grid_per_side, vopt.trim_fs)
                for q, f in enumerate(vopt.trim_fs):
                    emit("voronoi", format(f, "g"), res[q].value if res else None,
                         secs / len(vopt.trim_fs), err)
    return out


def _run_block(args):
    config, start, stop = args
    block = []
    for rep in range(start, stop):
        block.extend(run_replication(config, rep))
    return block


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _blocks(total: int, workers: int):
    size = max(1, math.ceil(total / (workers * 4)))
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def parallel_map_blocks(fn, config, total: int, workers: int) -> list:
    """Run ``fn((config, start, stop))`` over replication blocks and concatenate in order."""
    blocks = _blocks(total, workers)
    if workers <= 1 or len(blocks) == 1:
        parts = [fn((config, a, b)) for a, b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, [(config, a, b) for a, b in blocks]))
    return [item for part in parts for item in part]


def _calibration_block(args):
    config, start, stop = args
    window = Window(2, 1.0)
    return [len(simulate(config.model, window, substream(config.master_seed, rep).child(99))) / window.volume
            for rep in range(start, stop)]


def calibrate_intensity(config: ExperimentConfig, replications: int | None = None, workers: int = 1) -> dict:
    """Counting-estimator mean on [-1,1]^2 for models without a closed-form intensity."""
    reps = config.calibration_replications if replications is None else replications
    vals = np.array(parallel_map_blocks(_calibration_block, config, reps, workers))
    return {"replications": reps, "mean": float(vals.mean()),
            "sd": float(vals.std(ddof=1)) if reps > 1 else 0.0,
            "stderr": float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
            "window_half_side": 1.0}


def run_experiment(config: ExperimentConfig, workers: int | None = None,
                   calibration: dict | None = None) -> ExperimentReport:
    workers = default_workers() if workers is None else max(1, int(workers))
    records = parallel_map_blocks(_run_block, config, config.replications, workers)
    records.sort(key=lambda r: r.rep)  # stable: keeps the within-replication order

    failures = sum(r.error is not None for r in records)
    if records and failures / len(records) > config.max_failure_fraction:
        raise ExperimentAborted(
            f"{failures} of {len(records)} estimator evaluations failed "
            f"(limit {config.max_failure_fraction:.1%}); first error: "
            f"{next(r.error for r in records if r.error)}")

    ref = config.reference_intensity
    if ref is None:
        ref = config.model.intensity
    if ref is None and isinstance(config.model, PoissonHardCore):
        if calibration is None:
            calibration = calibrate_intensity(config, workers=workers)
        ref = calibration["mean"]
    return ExperimentReport(config, records, ref, calibration, failures)


# --------------------------------------------------------------------------- aggregation


def aggregate(report: ExperimentReport, reference_intensity: float | None = None) -> list[AggregateRow]:
    """Mean, sd, bias, MSE and MSE gain versus the counting estimator per table cell."""
    lam = report.reference_intensity if reference_intensity is None else reference_intensity
    groups: dict[tuple, dict[int, float]] = {}
    for r in report.records:
        if r.error is not None:
            continue
        key = (r.model, r.n, r.setting, r.rho, r.estimator, r.param)
        groups.setdefault(key, {})[r.rep] = r.value
    rows = []
    for key, by_rep in groups.items():
        vals = np.array(list(by_rep.values()))
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
        if lam is None:
            bias = mse = float("nan")
        else:
            bias = mean - lam
            mse = float(np.mean((vals - lam) ** 2))
        std_vals = groups.get(key[:4] + ("std", ""))
        flag = ""
        g = None
        if key[4] == "std":
            g = 0.0
        elif std_vals is None or lam is None:
            flag = "no std results" if std_vals is None else "no reference intensity"
        else:
            matched = np.array([std_vals[rep] for rep in by_rep if rep in std_vals])
            if matched.size:
                mse_std = float(np.mean((matched - lam) ** 2))
                g = gain(mse_std, mse) if mse_std > 0 else None
                flag = "" if g is not None else "zero reference MSE"
            else:
                flag = "no matched replications"
        rows.append(AggregateRow(*key, mean, sd, bias, mse, g, int(vals.size), flag))
    order = {"std": 0, "medianJ": 1, "medianJ2": 2, "voronoi": 3}
    rows.sort(key=lambda a: (a.model, a.n, a.setting, a.rho, order.get(a.estimator, 9),
                             float(a.param) if a.param else 0.0))
    return rows


def find_row(rows, estimator: str, n: float, setting: str = "A", rho: float = 0.0, param: str = ""):
    for row in rows:
        if (row.estimator, row.n, row.setting, row.rho, row.param) == (estimator, n, setting, rho, param):
            return row
    raise KeyError((estimator, n, setting, rho, param))


# --------------------------------------------------------------------------- serialisation


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_records_csv(records, path, timing: bool = False) -> None:
    """Records file. Wall times are left blank unless ``timing`` so that reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.model, _fmt(r.n), r.rep, r.setting, _fmt(r.rho), r.estimator, r.param,
                        _fmt(r.value), _fmt(r.seconds) if timing else "", r.base_digest])


def write_aggregates_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for a in rows:
            w.writerow([a.model, _fmt(a.n), a.setting, _fmt(a.rho), a.estimator, a.param, _fmt(a.mean),
                        _fmt(a.sd), _fmt(a.bias), _fmt(a.mse), _fmt(a.gain_pct)])


def build_manifest(reports: list[ExperimentReport], outputs: dict, workers: int) -> dict:
    configs = [r.config.to_dict() for r in reports]
    canon = json.dumps(configs, sort_keys=True, separators=(",", ":"))
    return {
        "config_digest": hashlib.sha256(canon.encode()).hexdigest(),
        "master_seeds": sorted({r.config.master_seed for r in reports}),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "workers": workers,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "configs": configs,
        "reference_intensities": {r.config.model.kind: r.reference_intensity for r in reports},
        "calibrations": {r.config.model.kind: r.calibration for r in reports if r.calibration},
        "lgcp_spacing": {r.config.model.kind: r.config.model.pixel_spacing
                         for r in reports if r.config.model.kind == "lgcp"},
        "stream_layout": "rep -> substream(master_seed, rep); window i: child(i,0) pattern, "
                         "child(i,1,j) contamination j, child(i,2,s) jitter for s cells per side",
        "failures": {r.config.model.kind: r.failures for r in reports},
    }


def write_report(reports: list[ExperimentReport], outdir, timing: bool = False, workers: int = 1) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {"records": outdir / "records.csv", "aggregates": outdir / "aggregates.csv",
             "manifest": outdir / "manifest.json"}
    write_records_csv([r for rep in reports for r in rep.records], paths["records"], timing)
    write_aggregates_csv([a for rep in reports for a in rep.aggregates()], paths["aggregates"])
    manifest = build_manifest(reports, paths, workers)
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
