"""Robust intensity estimation for stationary spatial point processes.

The main entry points are the simulators in :mod:`.models`, the estimators
in :mod:`.estimators` and the Monte Carlo engine in :mod:`.experiments`.
"""
__version__ = "0.1.0"

from .geometry import PointPattern, Tessellation, Window, count_per_cell, make_tessellation
from .randomness import RandomStream, substream
from .models import LGCP, MaternCluster, Poisson, PoissonHardCore, Thomas, simulate
from .contamination import Add, Delete, Pure, contaminate
from .estimators import (IDENTITY, JitterFunction, estimate_medianJ, estimate_medianJ2, estimate_std,
                         estimate_voronoi, sample_median, sample_quantile)

__all__ = [
    "Window", "PointPattern", "Tessellation", "make_tessellation", "count_per_cell",
    "RandomStream", "substream",
    "Poisson", "LGCP", "Thomas", "MaternCluster", "PoissonHardCore", "simulate",
    "Pure", "Add", "Delete", "contaminate",
    "JitterFunction", "IDENTITY", "sample_quantile", "sample_median",
    "estimate_std", "estimate_medianJ", "estimate_medianJ2", "estimate_voronoi",
]
