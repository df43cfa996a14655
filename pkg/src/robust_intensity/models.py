"""Simulators for stationary point process models.

All simulators are pure functions of ``(config, window, stream)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Union

import numba
import numpy as np

from .geometry import PointPattern, Window
from .randomness import ExponentialCovariance, RandomStream, as_generator, sample_gaussian_field


@dataclass(frozen=True)
class Poisson:
    lam: float
    kind = "poisson"

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("Poisson intensity must be non-negative")

    @property
    def intensity(self) -> float:
        return self.lam


@dataclass(frozen=True)
class LGCP:
    """Log-Gaussian Cox process with exponential covariance.

    ``spacing`` is the pixel side used to discretise the latent field; the
    default resolves the correlation scale with two pixels.
    """

    variance: float
    scale: float
    lam: float
    spacing: float | None = None
    kind = "lgcp"

    def __post_init__(self):
        if not (self.variance > 0 and self.scale > 0 and self.lam > 0):
            raise ValueError("LGCP needs positive variance, scale and intensity")
        if self.spacing is not None and not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def mu(self) -> float:
        return math.log(self.lam) - self.variance / 2

    @property
    def intensity(self) -> float:
        return self.lam

    @property
    def pixel_spacing(self) -> float:
        return self.scale / 2 if self.spacing is None else self.spacing

    @property
    def covariance(self) -> ExponentialCovariance:
        return ExponentialCovariance(self.variance, self.scale)


@dataclass(frozen=True)
class Thomas:
    """Neyman-Scott process with isotropic Gaussian offspring, sd ``sigma`` per axis."""

    kappa: float
    alpha: float
    sigma: float
    kind = "thomas"

    def __post_init__(self):
        _check_cluster(self)

    @property
    def intensity(self) -> float:
        return self.alpha * self.kappa

    @property
    def margin(self) -> float:
        return 6 * self.sigma


@dataclass(frozen=True)
class MaternCluster:
    """Neyman-Scott process with offspring uniform on a disc of radius ``sigma**2``."""

    kappa: float
    alpha: float
    sigma: float
    kind = "matern"

    def __post_init__(self):
        _check_cluster(self)

    @property
    def intensity(self) -> float:
        return self.alpha * self.kappa

    @property
    def radius(self) -> float:
        return self.sigma ** 2

    @property
    def margin(self) -> float:
        return self.radius


@dataclass(frozen=True)
class PoissonHardCore:
    """Poisson(beta) conditioned on no two points closer than ``R``.

    ``mh_steps`` defaults to ``1e5 * ceil(beta |W| / 400)`` birth-death steps,
    with ``W`` the observation window. The chain runs on the window dilated by
    ``margin`` (default ``2 R``) and the result is clipped, so the returned
    pattern is a restriction of the stationary process rather than a sample
    conditioned on the bare window.
    """

    beta: float
    R: float
    mh_steps: int | None = None
    margin: float | None = None
    kind = "phc"

    def __post_init__(self):
        if not (self.beta > 0 and self.R >= 0):
            raise ValueError("hard-core needs beta > 0 and R >= 0")
        if self.mh_steps is not None and self.mh_steps < 1:
            raise ValueError("mh_steps must be positive")
        if self.margin is not None and self.margin < 0:
            raise ValueError("margin must be non-negative")

    @property
    def simulation_margin(self) -> float:
        return 2 * self.R if self.margin is None else self.margin

    @property
    def intensity(self) -> float | None:
        return None

    def steps_for(self, window: Window) -> int:
        if self.mh_steps is not None:
            return int(self.mh_steps)
        return 100_000 * math.ceil(self.beta * window.volume / 400)


ModelConfig = Union[Poisson, LGCP, Thomas, MaternCluster, PoissonHardCore]

MODEL_TYPES = {cls.kind: cls for cls in (Poisson, LGCP, Thomas, MaternCluster, PoissonHardCore)}


def _check_cluster(cfg):
    if not (cfg.kappa > 0 and cfg.alpha >= 0):
        raise ValueError("cluster process needs kappa > 0 and alpha >= 0")
    if not (cfg.sigma > 0 and np.isfinite(cfg.sigma)):
        raise ValueError(f"invalid cluster sigma {cfg.sigma!r}")


def model_to_dict(cfg: ModelConfig) -> dict:
    return {"type": cfg.kind, **{k: v for k, v in asdict(cfg).items() if v is not None}}


def model_from_dict(data: dict) -> ModelConfig:
    data = dict(data)
    kind = data.pop("type", None)
    if kind not in MODEL_TYPES:
        raise ValueError(f"unknown model type {kind!r}; expected one of {sorted(MODEL_TYPES)}")
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    cls = MODEL_TYPES[kind]
    fields = cls.__dataclass_fields__
    for key, val in data.items():
        if key not in fields:
            raise ValueError(f"{key}: unknown parameter for {kind}")
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            if val is None and fields[key].default is None:
                continue
            raise ValueError(f"{key}: expected a number, got {val!r}")
    return cls(**data)


def _uniform_in(window: Window, size: int, rng: np.random.Generator) -> np.ndarray:
    return window.lower + window.side * rng.random((size, window.dim))


def _meta(cfg, stream) -> dict:
    meta = {"model": cfg.kind}
    if isinstance(stream, RandomStream):
        meta["stream"] = stream.describe()
    return meta


def simulate_poisson(lam: float, window: Window, stream) -> PointPattern:
    if lam < 0:
        raise ValueError("Poisson intensity must be non-negative")
    rng = as_generator(stream)
    count = rng.poisson(lam * window.volume)
    return PointPattern(_uniform_in(window, count, rng), window, _meta(Poisson(lam), stream))


def simulate_lgcp(cfg: LGCP, window: Window, stream) -> PointPattern:
    """Cox process driven by ``exp`` of a Gaussian field, piecewise constant per pixel."""
    rng = as_generator(stream)
    fld = sample_gaussian_field(window, cfg.pixel_spacing, cfg.mu, cfg.covariance, rng)
    h = fld.spacing
    counts = rng.poisson(np.exp(fld.values) * fld.pixel_area)
    idx = np.repeat(np.arange(counts.size), counts.ravel())
    cells = np.column_stack(np.unravel_index(idx, counts.shape)).astype(float)
    pts = window.lower + (cells + rng.random(cells.shape)) * h
    # guard the closed upper face against rounding
    pts = np.minimum(pts, window.upper)
    meta = _meta(cfg, stream) | {"spacing": h, "clipped_mass": fld.metadata["clipped_mass"]}
    return PointPattern(pts, window, meta)


def simulate_neyman_scott(cfg: Thomas | MaternCluster, window: Window, stream) -> PointPattern:
    """Parents on the window dilated by the model margin, offspring kept inside the window."""
    rng = as_generator(stream)
    big = window.dilated(cfg.margin)
    parents = _uniform_in(big, rng.poisson(cfg.kappa * big.volume), rng)
    sizes = rng.poisson(cfg.alpha, size=len(parents))
    origin = np.repeat(parents, sizes, axis=0)
    total = origin.shape[0]
    if isinstance(cfg, Thomas):
        disp = rng.normal(0.0, cfg.sigma, size=(total, window.dim))
    else:
        if window.dim != 2:
            raise NotImplementedError("Matern cluster offspring implemented for d=2")
        r = cfg.radius * np.sqrt(rng.random(total))
        theta = 2 * np.pi * rng.random(total)
        disp = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    pts = origin + disp
    pts = pts[window.contains(pts)]
    return PointPattern(pts, window, _meta(cfg, stream) | {"parents": len(parents)})


@numba.njit(cache=True)
def _hardcore_chain(rng, lo_x, lo_y, side, beta_area, r, steps, ncell, cap):
    """Birth-death Metropolis-Hastings for the hard-core process on a square.

    Birth and death are proposed with probability 1/2 each. Births are uniform
    on the square and accepted with probability min(1, beta|W|/(n+1)) when no
    existing point is closer than ``r``; deaths pick a uniform point and are
    accepted with probability min(1, n/(beta|W|)).
    """
    size = 64
    xs = np.empty(size)
    ys = np.empty(size)
    cell_of = np.empty(size, np.int64)
    slot_of = np.empty(size, np.int64)
    grid = np.full((ncell * ncell, cap), -1, np.int64)
    fill = np.zeros(ncell * ncell, np.int64)
    cw = side / ncell
    r2 = r * r
    use_grid = r > 0.0
    n = 0
    for _ in range(steps):
        if rng.random() < 0.5:
            x = lo_x + side * rng.random()
            y = lo_y + side * rng.random()
            u = rng.random()
            if u * (n + 1) > beta_area:
                continue
            c = 0
            if use_grid:
                cx = min(int((x - lo_x) / cw), ncell - 1)
                cy = min(int((y - lo_y) / cw), ncell - 1)
                conflict = False
                for ix in range(max(cx - 1, 0), min(cx + 2, ncell)):
                    for iy in range(max(cy - 1, 0), min(cy + 2, ncell)):
                        g = ix * ncell + iy
                        for s in range(fill[g]):
                            j = grid[g, s]
                            dx = xs[j] - x
                            dy = ys[j] - y
                            if dx * dx + dy * dy < r2:
                                conflict = True
                                break
                        if conflict:
                            break
                    if conflict:
                        break
                if conflict:
                    continue
                c = cx * ncell + cy
                if fill[c] >= cap:
                    raise RuntimeError("hard-core grid cell overflow")
            if n == size:
                size *= 2
                xs2 = np.empty(size)
                ys2 = np.empty(size)
                c2 = np.empty(size, np.int64)
                s2 = np.empty(size, np.int64)
                xs2[:n] = xs[:n]
                ys2[:n] = ys[:n]
                c2[:n] = cell_of[:n]
                s2[:n] = slot_of[:n]
                xs, ys, cell_of, slot_of = xs2, ys2, c2, s2
            xs[n] = x
            ys[n] = y
            if use_grid:
                cell_of[n] = c
                slot_of[n] = fill[c]
                grid[c, fill[c]] = n
                fill[c] += 1
            n += 1
        else:
            if n == 0:
                continue
            i = min(int(rng.random() * n), n - 1)
            u = rng.random()
            if u * beta_area > n:
                continue
            last = n - 1
            if use_grid:
                # drop i from its grid cell by moving the cell's last entry into its slot
                c = cell_of[i]
                s = slot_of[i]
                moved = grid[c, fill[c] - 1]
                grid[c, s] = moved
                slot_of[moved] = s
                fill[c] -= 1
                grid[c, fill[c]] = -1
                if last != i:
                    cl = cell_of[last]
                    grid[cl, slot_of[last]] = i
            xs[i] = xs[last]
            ys[i] = ys[last]
            cell_of[i] = cell_of[last]
            slot_of[i] = slot_of[last]
            n -= 1
    out = np.empty((n, 2))
    out[:, 0] = xs[:n]
    out[:, 1] = ys[:n]
    return out


def simulate_phc(cfg: PoissonHardCore, window: Window, stream) -> PointPattern:
    """Hard-core Gibbs sample after ``mh_steps`` birth-death steps from the empty pattern."""
    if window.dim != 2:
        raise NotImplementedError("hard-core sampler implemented for d=2")
    rng = as_generator(stream)
    steps = cfg.steps_for(window)
    sim = window.dilated(cfg.simulation_margin)
    if cfg.R > 0:
        ncell = max(1, min(int(sim.side / cfg.R), 1024))
        per_axis = int(sim.side / ncell / cfg.R) + 2
        cap = 2 * per_axis * per_axis
    else:
        ncell, cap = 1, 1
    lo = sim.lower
    pts = _hardcore_chain(rng, lo[0], lo[1], sim.side, cfg.beta * sim.volume,
                          float(cfg.R), steps, ncell, cap)
    pts = pts[window.contains(pts)]
    meta = _meta(cfg, stream) | {"mh_steps": steps, "margin": cfg.simulation_margin}
    return PointPattern(pts, window, meta)


def simulate(cfg: ModelConfig, window: Window, stream) -> PointPattern:
    if isinstance(cfg, Poisson):
        return simulate_poisson(cfg.lam, window, stream)
    if isinstance(cfg, LGCP):
        return simulate_lgcp(cfg, window, stream)
    if isinstance(cfg, (Thomas, MaternCluster)):
        return simulate_neyman_scott(cfg, window, stream)
    if isinstance(cfg, PoissonHardCore):
        return simulate_phc(cfg, window, stream)
    raise TypeError(f"unsupported model config {cfg!r}")
