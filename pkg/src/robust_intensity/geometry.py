"""Observation windows, grid tessellations and per-cell counting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Window:
    """Axis-aligned cube ``center + [-half_side, half_side]^dim``."""

    dim: int = 2
    half_side: float = 1.0
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not (self.half_side > 0 and np.isfinite(self.half_side)):
            raise ValueError(f"half_side must be positive, got {self.half_side!r}")
        center = (0.0,) * self.dim if self.center is None else tuple(float(c) for c in self.center)
        if len(center) != self.dim:
            raise ValueError("center must have dim coordinates")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "half_side", float(self.half_side))
        object.__setattr__(self, "center", center)

    @property
    def side(self) -> float:
        return 2.0 * self.half_side

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_side

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + self.half_side

    def contains(self, points) -> np.ndarray:
        """Boolean mask of the points lying in the closed window."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def translated(self, shift) -> "Window":
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.dim,))
        return Window(self.dim, self.half_side, tuple(np.asarray(self.center) + shift))

    def dilated(self, margin: float) -> "Window":
        return Window(self.dim, self.half_side + margin, self.center)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite set of points observed in a window.

    ``metadata`` records where the pattern came from (model, seed path, contamination, ...).
    """

    points: np.ndarray
    window: Window
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = np.empty((0, self.window.dim))
        pts = pts.reshape(-1, self.window.dim)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if not np.all(self.window.contains(pts)):
            raise ValueError("every point must lie inside the window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def count(self) -> int:
        return len(self)

    def with_points(self, points, **metadata) -> "PointPattern":
        return PointPattern(points, self.window, {**self.metadata, **metadata})

    def digest(self) -> str:
        """Short content hash of the coordinates, used to check pairing in experiments."""
        import hashlib

        h = hashlib.sha256(np.ascontiguousarray(self.points).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Tessellation:
    """Regular grid of ``cells_per_side**dim`` equal cubes covering a window."""

    window: Window
    cells_per_side: int

    @property
    def cell_count(self) -> int:
        return self.cells_per_side ** self.window.dim

    @property
    def cell_side(self) -> float:
        return self.window.side / self.cells_per_side

    @property
    def cell_volume(self) -> float:
        return self.window.volume / self.cell_count

    def edges(self, axis: int = 0) -> np.ndarray:
        """Cell boundaries along one axis: ``lower + j * side / s``."""
        j = np.arange(self.cells_per_side + 1)
        return self.window.lower[axis] + j * (self.window.side / self.cells_per_side)

    def cells(self) -> list[tuple[tuple[int, ...], np.ndarray, np.ndarray]]:
        """List of ``(index, lower corner, upper corner)`` for every cell, C order."""
        s, d = self.cells_per_side, self.window.dim
        edges = [self.edges(a) for a in range(d)]
        out = []
        for idx in np.ndindex(*(s,) * d):
            lo = np.array([edges[a][i] for a, i in enumerate(idx)])
            hi = np.array([edges[a][i + 1] for a, i in enumerate(idx)])
            out.append((idx, lo, hi))
        return out


def make_tessellation(window: Window, cells_per_side: int) -> Tessellation:
    if int(cells_per_side) != cells_per_side or cells_per_side < 1:
        raise ValueError(f"cells_per_side must be a positive integer, got {cells_per_side!r}")
    return Tessellation(window, int(cells_per_side))


def cell_indices(points: np.ndarray, tess: Tessellation) -> np.ndarray:
    """Flat (C order) cell index of each point.

    Cells are lower-closed and upper-open per axis; the window's upper faces
    belong to the last cell so that every point of the closed window is
    assigned exactly once.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, tess.window.dim)
    s = tess.cells_per_side
    rel = (pts - tess.window.lower) * (s / tess.window.side)
    idx = np.floor(rel).astype(np.int64)
    np.clip(idx, 0, s - 1, out=idx)
    if idx.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return np.ravel_multi_index(tuple(idx.T), (s,) * tess.window.dim)


def count_per_cell(pattern: PointPattern, tess: Tessellation) -> np.ndarray:
    """Number of points in each cell, length ``k_n``, C order."""
    if pattern.window != tess.window:
        raise ValueError("pattern window and tessellation window differ")
    return np.bincount(cell_indices(pattern.points, tess), minlength=tess.cell_count)
