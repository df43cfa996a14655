"""Intensity estimators: counting, jittered median, rule-of-thumb median, Voronoi trimmed mean."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .geometry import PointPattern, Window, count_per_cell, make_tessellation
from .randomness import as_generator

ESTIMATORS = ("std", "medianJ", "medianJ2", "voronoi")


@dataclass(frozen=True)
class JitterFunction:
    """Increasing bijection ``phi(t) = t**exponent`` of [0, 1].

    Counts are jittered by ``phi^{-1}(U)``. Only the identity gives the
    median estimator its asymptotic theory; the other exponents are kept for
    exploring the true median of the jittered variable.
    """

    exponent: float = 1.0

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError("jitter exponent must be positive")

    @property
    def name(self) -> str:
        if self.exponent == 1:
            return "identity"
        if self.exponent == 0.5:
            return "sqrt"
        if self.exponent == 2:
            return "square"
        return f"power:{self.exponent:g}"

    def __call__(self, t):
        return np.power(t, self.exponent)

    def inverse(self, u):
        return np.power(u, 1.0 / self.exponent)

    def derivative(self, t):
        if self.exponent == 1:
            return np.ones_like(np.asarray(t, dtype=float))
        return self.exponent * np.power(t, self.exponent - 1)

    @classmethod
    def parse(cls, text: "str | JitterFunction") -> "JitterFunction":
        if isinstance(text, JitterFunction):
            return text
        key = str(text).strip().lower()
        named = {"identity": 1.0, "t": 1.0, "sqrt": 0.5, "square": 2.0, "t2": 2.0}
        if key in named:
            return cls(named[key])
        if key.startswith("power:"):
            return cls(float(key.split(":", 1)[1]))
        raise ValueError(f"unknown jitter function {text!r}")


IDENTITY = JitterFunction(1.0)
SQRT = JitterFunction(0.5)
SQUARE = JitterFunction(2.0)


@dataclass(frozen=True, eq=False)
class JitteredSample:
    z_values: np.ndarray
    cell_volume: float


@dataclass(frozen=True)
class EstimatorResult:
    estimator_id: str
    value: float
    metadata: dict[str, Any] = field(default_factory=dict)


def _rank(p: float, n: int) -> int:
    # ceil(p n) robust to representation error in p
    return min(max(math.ceil(p * n - 1e-9), 1), n)


def sample_quantile(values, p: float) -> float:
    """Order statistic of rank ``ceil(p n)``, i.e. ``inf{x : p <= F_n(x)}``.

    For even sizes the median is the lower middle value; the two middle values
    are never averaged.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("sample_quantile of an empty sample")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    k = _rank(p, v.size)
    return float(np.partition(v, k - 1)[k - 1])


def sample_median(values) -> float:
    return sample_quantile(values, 0.5)


def trimmed_mean(values, f: float) -> float:
    """Mean after dropping ``floor(f n)`` values from each end."""
    if not 0 <= f < 0.5:
        raise ValueError("trim fraction must lie in [0, 0.5)")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    cut = math.floor(f * v.size + 1e-9)
    kept = v[cut:v.size - cut]
    if kept.size == 0:
        raise ValueError("nothing left after trimming")
    return float(kept.mean())


def estimate_std(pattern: PointPattern) -> EstimatorResult:
    return EstimatorResult("std", len(pattern) / pattern.window.volume)


def jitter_counts(counts, phi: JitterFunction, stream=None, *, uniforms=None) -> JitteredSample:
    """``z_k = counts_k + phi^{-1}(U_k)``, one uniform per cell in index order.

    ``uniforms`` may be passed directly instead of a stream; the cell volume
    is left at 1 and filled in by the caller.
    """
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    if uniforms is None:
        uniforms = as_generator(stream).random(counts.size)
    u = np.asarray(uniforms, dtype=float).reshape(counts.shape)
    return JitteredSample(counts + phi.inverse(u), 1.0)


def _jittered(pattern, cells_per_side, phi, stream):
    tess = make_tessellation(pattern.window, cells_per_side)
    counts = count_per_cell(pattern, tess)
    js = jitter_counts(counts, phi, stream)
    return JitteredSample(js.z_values, tess.cell_volume), tess


def estimate_medianJ(pattern: PointPattern, cells_per_side: int, phi: JitterFunction = IDENTITY,
                     stream=None) -> EstimatorResult:
    """Sample median of the jittered cell counts divided by the cell volume."""
    js, tess = _jittered(pattern, cells_per_side, phi, stream)
    value = sample_median(js.z_values) / js.cell_volume
    return EstimatorResult("medianJ", value, {"k_n": tess.cell_count, "jitter": phi.name})


def estimate_medianJ2(pattern: PointPattern, cells_per_side: int, phi: JitterFunction = IDENTITY,
                      stream=None) -> EstimatorResult:
    """Jittered median shifted by ``-1/(3 c_n)``, the Poisson rule of thumb for the median offset."""
    res = estimate_medianJ(pattern, cells_per_side, phi, stream)
    c_n = pattern.window.volume / res.metadata["k_n"]
    return EstimatorResult("medianJ2", res.value - 1.0 / (3.0 * c_n), res.metadata)


def median_family(pattern: PointPattern, cells_per_side: int, phi: JitterFunction, stream
                  ) -> tuple[EstimatorResult, EstimatorResult]:
    """Both median estimators from one jittered sample."""
    j = estimate_medianJ(pattern, cells_per_side, phi, stream)
    c_n = pattern.window.volume / j.metadata["k_n"]
    return j, EstimatorResult("medianJ2", j.value - 1.0 / (3.0 * c_n), j.metadata)


@dataclass(frozen=True, eq=False)
class VoronoiCells:
    """Voronoi cells of the distinct sites of a pattern, clipped to its window."""

    sites: np.ndarray
    areas: np.ndarray
    border: np.ndarray
    site_of_point: np.ndarray

    def point_areas(self) -> np.ndarray:
        return self.areas[self.site_of_point]

    def point_border(self) -> np.ndarray:
        return self.border[self.site_of_point]


def _mirror(sites: np.ndarray, window: Window) -> np.ndarray:
    lo, hi = window.lower, window.upper
    copies = [sites]
    for axis in range(2):
        for bound in (lo[axis], hi[axis]):
            m = sites.copy()
            m[:, axis] = 2 * bound - m[:, axis]
            copies.append(m)
    return np.concatenate(copies)


def voronoi_cell_areas(pattern: PointPattern) -> VoronoiCells:
    """Clipped Voronoi cell areas and border flags.

    Sites are mirrored across the four window edges; in the Voronoi diagram
    of sites plus mirrors, each original site's cell is exactly its cell
    clipped to the rectangle. Duplicate points are merged into one site. A
    cell is border-flagged when one of its vertices lies on the window
    boundary.
    """
    window = pattern.window
    if window.dim != 2:
        raise NotImplementedError("Voronoi cells implemented for d=2")
    if len(pattern) == 0:
        raise ValueError("Voronoi cells need at least one point")
    sites, site_of_point = np.unique(pattern.points, axis=0, return_inverse=True)
    site_of_point = site_of_point.ravel()
    # points exactly on an edge would coincide with their mirror image
    eps = 1e-12 * window.side
    sites = np.clip(sites, window.lower + eps, window.upper - eps)
    m = len(sites)
    if m == 1:
        return VoronoiCells(sites, np.array([window.volume]), np.array([True]), site_of_point)

    vor = Voronoi(_mirror(sites, window))
    ridges = vor.ridge_points
    verts = np.asarray(vor.ridge_vertices)
    keep = (ridges.min(axis=1) < m) & (verts.min(axis=1) >= 0)
    ridges, verts = ridges[keep], verts[keep]
    a = vor.vertices[verts[:, 0]]
    b = vor.vertices[verts[:, 1]]

    areas = np.zeros(m)
    for side in (0, 1):
        owner = ridges[:, side]
        own = owner < m
        p = vor.points[owner[own]]
        tri = 0.5 * np.abs((a[own, 0] - p[:, 0]) * (b[own, 1] - p[:, 1])
                           - (a[own, 1] - p[:, 1]) * (b[own, 0] - p[:, 0]))
        np.add.at(areas, owner[own], tri)

    tol = 1e-9 * window.side
    on_edge = np.any((np.abs(vor.vertices - window.lower) <= tol)
                     | (np.abs(vor.vertices - window.upper) <= tol), axis=1)
    ridge_touch = on_edge[verts[:, 0]] | on_edge[verts[:, 1]]
    border = np.zeros(m, dtype=bool)
    for side in (0, 1):
        owner = ridges[:, side]
        own = owner < m
        np.logical_or.at(border, owner[own], ridge_touch[own])
    return VoronoiCells(sites, areas, border, site_of_point)


def dummy_grid(window: Window, grid_per_side: int) -> np.ndarray:
    """Pixel centres of a ``grid_per_side``-square partition of the window."""
    if grid_per_side < 1:
        raise ValueError("grid_per_side must be positive")
    h = window.side / grid_per_side
    axes = [window.lower[a] + (np.arange(grid_per_side) + 0.5) * h for a in range(window.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def voronoi_inverse_areas(pattern: PointPattern, grid_per_side: int) -> np.ndarray:
    """Inverse cell areas seen from the dummy grid, border cells removed."""
    cells = voronoi_cell_areas(pattern)
    grid = dummy_grid(pattern.window, grid_per_side)
    _, nearest = cKDTree(cells.sites).query(grid)
    interior = ~cells.border[nearest]
    if not interior.any():
        raise ValueError("no interior cells")
    return 1.0 / cells.areas[nearest[interior]]


def estimate_voronoi(pattern: PointPattern, grid_per_side: int = 200, trim_f: float = 0.05
                     ) -> EstimatorResult:
    if not 0 <= trim_f < 0.5:
        raise ValueError("trim fraction must lie in [0, 0.5)")
    inv = voronoi_inverse_areas(pattern, grid_per_side)
    return EstimatorResult("voronoi", trimmed_mean(inv, trim_f),
                           {"grid_per_side": grid_per_side, "trim_f": trim_f})


def voronoi_family(pattern: PointPattern, grid_per_side: int, trim_fs) -> list[EstimatorResult]:
    """Voronoi estimates for several trim fractions sharing one diagram."""
    inv = voronoi_inverse_areas(pattern, grid_per_side)
    return [EstimatorResult("voronoi", trimmed_mean(inv, f), {"grid_per_side": grid_per_side, "trim_f": f})
            for f in trim_fs]
