"""Exact and asymptotic reference quantities for the jittered median estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .estimators import IDENTITY, JitterFunction, jitter_counts, sample_median
from .geometry import Window, count_per_cell, make_tessellation
from .models import LGCP, MaternCluster, ModelConfig, Poisson, PoissonHardCore, Thomas, simulate
from .randomness import RandomStream, substream


@dataclass(frozen=True)
class TheoreticalMedianReport:
    nu: float
    integer_median: int
    jittered_median: float

    @property
    def offset(self) -> float:
        return self.jittered_median - self.nu

    @property
    def integer_offset(self) -> float:
        return self.integer_median - self.nu


@dataclass(frozen=True)
class SigmaSquared:
    value: float
    method: str
    model: str
    stderr: float | None = None


def _poisson_cdf(k, nu):
    k = np.asarray(k)
    if nu == 0:
        return np.where(k >= 0, 1.0, 0.0)
    return stats.poisson.cdf(k, nu)


def _poisson_pmf(k, nu):
    k = np.asarray(k)
    if nu == 0:
        return np.where(k == 0, 1.0, 0.0)
    # scipy evaluates the pmf in log space, safe for large means
    return stats.poisson.pmf(k, nu)


def jittered_cdf(nu: float, t, phi: JitterFunction = IDENTITY):
    """cdf of ``Z = N + phi^{-1}(U)`` with ``N ~ Poisson(nu)``."""
    if nu < 0:
        raise ValueError("nu must be non-negative")
    t = np.asarray(t, dtype=float)
    fl = np.floor(t)
    frac = np.clip(t - fl, 0.0, 1.0)
    out = _poisson_cdf(fl - 1, nu) + _poisson_pmf(fl, nu) * phi(frac)
    out = np.where(t < 0, 0.0, out)
    return out.item() if out.ndim == 0 else out


def jittered_density(nu: float, t, phi: JitterFunction = IDENTITY):
    t = np.asarray(t, dtype=float)
    fl = np.floor(t)
    out = np.where(t < 0, 0.0, _poisson_pmf(fl, nu) * phi.derivative(t - fl))
    return out.item() if out.ndim == 0 else out


def poisson_medians(nu) -> np.ndarray:
    """Smallest integers ``m`` with ``P(N <= m) >= 1/2``, elementwise."""
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise ValueError("nu must be positive")
    m = stats.poisson.ppf(0.5, nu)
    # ppf works from a floating cdf; step once each way to pin the definition
    m = np.where((m > 0) & (stats.poisson.cdf(m - 1, nu) >= 0.5), m - 1, m)
    m = np.where(stats.poisson.cdf(m, nu) < 0.5, m + 1, m)
    return m.astype(np.int64)


def poisson_median(nu: float) -> int:
    return int(poisson_medians(nu))


def jittered_medians(nu, phi: JitterFunction = IDENTITY) -> tuple[np.ndarray, np.ndarray]:
    """Integer medians and jittered medians for an array of Poisson means.

    The jittered median lies in ``[m, m+1]`` with ``m`` the integer median,
    where the cdf is ``P(N <= m-1) + P(N = m) phi(t - m)``; solving for
    ``t`` is closed form.
    """
    nu = np.asarray(nu, dtype=float)
    m = poisson_medians(nu)
    below = stats.poisson.cdf(m - 1, nu)
    frac = np.clip((0.5 - below) / stats.poisson.pmf(m, nu), 0.0, 1.0)
    return m, m + phi.inverse(frac)


def exact_jittered_median(nu: float, phi: JitterFunction = IDENTITY) -> TheoreticalMedianReport:
    """True medians of ``N ~ Poisson(nu)`` and of ``N + phi^{-1}(U)``."""
    m, t = jittered_medians(nu, phi)
    return TheoreticalMedianReport(float(nu), int(m), float(t))


def sigma_squared(model: ModelConfig, stream=None, **mc_options) -> SigmaSquared:
    """Asymptotic count variance per unit area, ``lambda + lambda^2 * int (g - 1)``.

    Poisson, LGCP and Neyman-Scott models are analytic (for the LGCP the pair
    correlation is ``exp(c(r))``; for Neyman-Scott ``int (g-1) = 1/kappa``).
    The hard-core model falls back to :func:`sigma_squared_monte_carlo`.
    """
    if isinstance(model, Poisson):
        return SigmaSquared(float(model.lam), "analytic", model.kind)
    if isinstance(model, LGCP):
        lam = model.lam

        def integrand(r):
            return (math.expm1(model.variance * math.exp(-r / model.scale))) * 2 * math.pi * r

        # the integrand decays like exp(-r/scale); beyond 60 scales it is below 1e-20
        val, err = integrate.quad(integrand, 0, 60 * model.scale, limit=200, epsabs=0, epsrel=1e-10)
        if not np.isfinite(val) or err > 1e-8 * abs(val):
            raise ArithmeticError(f"pair correlation integral did not converge (estimate {val}, error {err})")
        return SigmaSquared(lam + lam * lam * val, "analytic", model.kind)
    if isinstance(model, (Thomas, MaternCluster)):
        lam = model.intensity
        return SigmaSquared(lam + lam * lam / model.kappa, "analytic", model.kind)
    if isinstance(model, PoissonHardCore):
        if stream is None:
            stream = substream(0, 0)
        return sigma_squared_monte_carlo(model, stream, **mc_options)
    raise TypeError(f"unsupported model {model!r}")


def sigma_squared_monte_carlo(model: ModelConfig, stream, reps: int = 2000, half_side: float = 1.0,
                              fractions=(0.4, 0.55, 0.7, 0.85, 1.0)) -> SigmaSquared:
    """Slope of ``Var N(C)`` against ``|C|`` over centred squares of growing size.

    The fit is ``Var N(C) = s |C| + b side(C)``; the side term absorbs the
    boundary correction of order perimeter times the interaction range.
    """
    window = Window(2, half_side)
    base = stream if isinstance(stream, RandomStream) else substream(int(stream), 0)
    halves = np.asarray(fractions, dtype=float) * half_side
    counts = np.empty((reps, halves.size))
    for r in range(reps):
        pts = simulate(model, window, base.child(r)).points
        extent = np.max(np.abs(pts), axis=1) if len(pts) else np.empty(0)
        counts[r] = [(extent <= h).sum() for h in halves]
    var = counts.var(axis=0, ddof=1)
    sides = 2 * halves
    design = np.column_stack([sides ** 2, sides])
    coef, *_ = np.linalg.lstsq(design, var, rcond=None)
    # stderr from the largest square alone: Var of a sample variance ~ 2 var^2/(R-1)
    se = math.sqrt(2.0 / (reps - 1)) * var[-1] / sides[-1] ** 2
    return SigmaSquared(float(coef[0]), "monte_carlo", model.kind, se)


def gain(mse_std: float, mse_j: float) -> float:
    """Relative MSE reduction of an estimator versus the counting estimator, in percent."""
    if mse_std == 0:
        raise ZeroDivisionError("gain undefined when the reference MSE is zero")
    if mse_std < 0 or mse_j < 0:
        raise ValueError("MSE values must be non-negative")
    return (mse_std - mse_j) / mse_std * 100.0


@dataclass(frozen=True)
class MedianBiasBound:
    general: float
    cox: float | None
    epsilon: float
    sigma2: float


def median_bias_bound(model: ModelConfig, c_n: float, epsilon: float = 0.01,
                      sigma2: float | None = None) -> MedianBiasBound:
    """Bounds on ``|Me(Z)/c_n - lambda|`` for cells of volume ``c_n``.

    ``general`` holds for any process with integrable ``g - 1`` once ``c_n``
    is large: ``(1/2 + sqrt(1/12))/c_n + (1 + eps) sigma / sqrt(c_n)``.
    ``cox`` is the sharper ``4/(3 c_n)`` valid for Poisson and Cox models.
    """
    if c_n <= 0:
        raise ValueError("c_n must be positive")
    s2 = sigma_squared(model).value if sigma2 is None else float(sigma2)
    general = (0.5 + math.sqrt(1 / 12)) / c_n + (1 + epsilon) * math.sqrt(s2) / math.sqrt(c_n)
    cox = 4.0 / (3.0 * c_n) if isinstance(model, (Poisson, LGCP, Thomas, MaternCluster)) else None
    return MedianBiasBound(general, cox, epsilon, s2)


def local_limit_ratio(lam: float, c_n: float, sigma2: float | None = None) -> tuple[float, float]:
    """``sqrt(c_n) P(N = floor(lam c_n))`` for Poisson counts and its limit ``(2 pi sigma^2)^{-1/2}``."""
    nu = lam * c_n
    value = math.sqrt(c_n) * float(_poisson_pmf(math.floor(nu), nu))
    s2 = lam if sigma2 is None else sigma2
    return value, 1.0 / math.sqrt(2 * math.pi * s2)


@dataclass
class CLTDiagnostics:
    half_side: float
    k_n: int
    reps: int
    intensity: float
    sigma2: float
    ecdf_variance: float
    median_scaled_variance: float
    median_scaled_target: float
    variance_ratio: float
    local_limit: float
    local_limit_target: float
    local_limit_method: str
    ci_coverage: float
    ci_level: float

    @property
    def ecdf_target(self) -> float:
        return 0.25

    @property
    def variance_ratio_target(self) -> float:
        return math.pi / 2


def clt_diagnostics(model: ModelConfig, n_list, k_n: int, reps: int, seed: int = 0,
                    intensity: float | None = None, sigma2: float | None = None,
                    phi: JitterFunction = IDENTITY, ci_level: float = 0.95) -> list[CLTDiagnostics]:
    """Monte Carlo checks of the limit laws of the jittered median estimator.

    For every window half-side ``n`` this reports the variance of
    ``sqrt(k_n) (F_hat(Me_Z) - 1/2)`` (limit 1/4), the variance of
    ``|W|^{1/2} (lambda_J - lambda)`` (limit ``pi sigma^2 / 2``), the ratio
    ``Var(lambda_J)/Var(lambda_std)`` (limit ``pi/2``), the local limit
    ``sqrt(c_n) P(N = floor(lambda c_n))`` and the coverage of the normal
    confidence interval built from the limiting variance.
    """
    if reps < 2:
        raise ValueError("need at least two replications")
    s = math.isqrt(k_n)
    if s * s != k_n:
        raise ValueError("k_n must be a perfect square")
    lam = model.intensity if intensity is None else intensity
    if lam is None:
        raise ValueError("model intensity unknown; pass intensity=")
    s2 = sigma_squared(model).value if sigma2 is None else sigma2
    zq = stats.norm.ppf(0.5 + ci_level / 2)
    out = []
    for i, n in enumerate(n_list):
        window = Window(2, float(n))
        tess = make_tessellation(window, s)
        c_n = tess.cell_volume
        base = substream(seed, i)
        counts = np.empty((reps, k_n), dtype=np.int64)
        zs = np.empty((reps, k_n))
        for r in range(reps):
            stream = base.child(r)
            pattern = simulate(model, window, stream.child(0))
            counts[r] = count_per_cell(pattern, tess)
            zs[r] = jitter_counts(counts[r], phi, stream.child(1)).z_values
        if isinstance(model, Poisson):
            me_z = exact_jittered_median(lam * c_n, phi).jittered_median
            local, target = local_limit_ratio(lam, c_n, s2)
            method = "exact"
        else:
            me_z = sample_median(zs.ravel())
            local = math.sqrt(c_n) * float(np.mean(counts == math.floor(lam * c_n)))
            target = 1.0 / math.sqrt(2 * math.pi * s2)
            method = "monte_carlo"
        ecdf = (zs <= me_z).mean(axis=1)
        lam_j = np.array([sample_median(z) for z in zs]) / c_n
        lam_std = counts.sum(axis=1) / window.volume
        scaled = math.sqrt(window.volume) * (lam_j - lam)
        half = zq * math.sqrt(math.pi * s2 / 2 / window.volume)
        out.append(CLTDiagnostics(
            half_side=float(n), k_n=k_n, reps=reps, intensity=float(lam), sigma2=float(s2),
            ecdf_variance=float(np.var(math.sqrt(k_n) * (ecdf - 0.5), ddof=1)),
            median_scaled_variance=float(np.var(scaled, ddof=1)),
            median_scaled_target=math.pi * s2 / 2,
            variance_ratio=float(np.var(lam_j, ddof=1) / np.var(lam_std, ddof=1)),
            local_limit=local, local_limit_target=target, local_limit_method=method,
            ci_coverage=float(np.mean(np.abs(lam_j - lam) <= half)), ci_level=ci_level,
        ))
    return out
