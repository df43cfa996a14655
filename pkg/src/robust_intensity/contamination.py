"""Outlier injection: pure patterns, points added in a small square, points deleted in the corners."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import PointPattern
from .randomness import as_generator


@dataclass(frozen=True)
class Pure:
    kind = "pure"
    rho = 0.0


@dataclass(frozen=True)
class Add:
    """Add ``round(rho * m)`` uniform points in a random square of side ``n/5``."""

    rho: float
    kind = "add"

    def __post_init__(self):
        _check_rho(self.rho)


@dataclass(frozen=True)
class Delete:
    """Remove every point in four corner squares covering a fraction ``rho`` of the window."""

    rho: float
    kind = "delete"

    def __post_init__(self):
        _check_rho(self.rho)


ContaminationConfig = Union[Pure, Add, Delete]


def _check_rho(rho):
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")


def setting_label(cfg: ContaminationConfig) -> str:
    return {"pure": "A", "add": "B", "delete": "C"}[cfg.kind]


def contamination_from_dict(data) -> ContaminationConfig:
    if isinstance(data, str):
        data = {"type": data}
    kind = str(data.get("type", "pure")).lower()
    if kind in ("pure", "a"):
        return Pure()
    if kind in ("add", "b"):
        return Add(float(data["rho"]))
    if kind in ("delete", "c"):
        return Delete(float(data["rho"]))
    raise ValueError(f"unknown contamination type {kind!r}")


def contamination_to_dict(cfg: ContaminationConfig) -> dict:
    return {"type": cfg.kind} if isinstance(cfg, Pure) else {"type": cfg.kind, "rho": cfg.rho}


def contaminate_add(pattern: PointPattern, stream, rho: float) -> PointPattern:
    """Union of the pattern with ``round(rho m)`` uniform points in a square of side ``n/5``.

    The square's lower corner is uniform on ``[lo, hi - n/5]^d`` so the square
    always lies inside the window.
    """
    _check_rho(rho)
    window = pattern.window
    rng = as_generator(stream)
    side = window.half_side / 5
    corner = window.lower + (window.side - side) * rng.random(window.dim)
    extra = int(round(rho * len(pattern)))
    added = corner + side * rng.random((extra, window.dim))
    return pattern.with_points(np.concatenate([pattern.points, added]),
                               contamination="add", rho=rho, added=extra,
                               add_square=tuple(corner.tolist()) + (side,))


def corner_squares_mask(points, window, rho: float) -> np.ndarray:
    """Points lying in one of the four corner squares of side ``n sqrt(rho)`` (planar)."""
    pts = np.asarray(points, dtype=float).reshape(-1, window.dim)
    side = window.half_side * math.sqrt(rho)
    lo, hi = window.lower, window.upper
    near = (pts < lo + side) | (pts > hi - side)
    return np.all(near, axis=1)


def contaminate_delete(pattern: PointPattern, stream, rho: float) -> PointPattern:
    """Drop the points in the four corner squares (total area ``rho |W|``).

    ``stream`` is accepted for a uniform signature; the corner placement is
    deterministic.
    """
    _check_rho(rho)
    if pattern.window.dim != 2:
        raise NotImplementedError("corner deletion defined for d=2")
    gone = corner_squares_mask(pattern.points, pattern.window, rho)
    return pattern.with_points(pattern.points[~gone], contamination="delete", rho=rho,
                               deleted=int(gone.sum()))


def contaminate(pattern: PointPattern, cfg: ContaminationConfig, stream) -> PointPattern:
    if isinstance(cfg, Pure):
        return pattern
    if isinstance(cfg, Add):
        return contaminate_add(pattern, stream, cfg.rho)
    if isinstance(cfg, Delete):
        return contaminate_delete(pattern, stream, cfg.rho)
    raise TypeError(f"unsupported contamination {cfg!r}")
