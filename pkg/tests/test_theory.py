import math

import numpy as np
import pytest
from scipy import optimize, stats

from robust_intensity.estimators import IDENTITY, SQRT, SQUARE
from robust_intensity.models import LGCP, MaternCluster, Poisson, PoissonHardCore, Thomas
from robust_intensity.randomness import substream
from robust_intensity.theory import (clt_diagnostics, exact_jittered_median, gain, jittered_cdf, jittered_density,
                                     local_limit_ratio, median_bias_bound, poisson_median, sigma_squared,
                                     sigma_squared_monte_carlo)


def _bisect_median(nu, phi):
    """Independent oracle: root of F_Z(t) - 1/2 by bracketing."""
    hi = nu + 10 * math.sqrt(nu) + 10
    return optimize.brentq(lambda t: jittered_cdf(nu, t, phi) - 0.5, 0.0, hi, xtol=1e-13)


@pytest.mark.parametrize("nu", [0.3, 1.0, 2.5, 7.0, 42.42, 100.0, 399.5])
@pytest.mark.parametrize("phi", [IDENTITY, SQRT, SQUARE])
def test_exact_median_matches_root_finder(nu, phi):
    assert exact_jittered_median(nu, phi).jittered_median == pytest.approx(_bisect_median(nu, phi), abs=1e-9)


def test_jittered_median_offset_near_one_third():
    for nu in (50, 100, 250.5):
        assert exact_jittered_median(nu).offset == pytest.approx(1 / 3, abs=0.01)


def test_poisson_median_bounds():
    nus = np.linspace(0.01, 200, 3000)
    off = np.array([poisson_median(nu) - nu for nu in nus])
    assert off.min() >= -math.log(2) - 1e-12 and off.max() <= 1 / 3 + 1e-12
    for k in (1, 5, 60):
        assert poisson_median(k) == k
    with pytest.raises(ValueError):
        poisson_median(0.0)


def test_poisson_median_against_scipy():
    for nu in (0.5, 3.3, 17.0, 101.2):
        m = poisson_median(nu)
        assert stats.poisson.cdf(m, nu) >= 0.5 > stats.poisson.cdf(m - 1, nu)


def test_jittered_cdf_limits_and_density():
    nu = 12.3
    assert jittered_cdf(nu, -0.1) == 0.0
    assert jittered_cdf(nu, 200.0) == pytest.approx(1.0)
    for phi in (IDENTITY, SQRT, SQUARE):
        for t in (3.3, 11.7, 12.5):
            h = 1e-6
            fd = (jittered_cdf(nu, t + h, phi) - jittered_cdf(nu, t - h, phi)) / (2 * h)
            assert jittered_density(nu, t, phi) == pytest.approx(fd, rel=1e-5)


def test_jittered_cdf_against_sampling():
    rng = np.random.default_rng(0)
    z = rng.poisson(4.2, 200_000) + rng.random(200_000) ** 2  # phi(t) = sqrt(t)
    for t in (2.5, 4.1, 6.9):
        assert jittered_cdf(4.2, t, SQRT) == pytest.approx(np.mean(z <= t), abs=0.005)


def test_sigma_squared_analytic_values():
    assert sigma_squared(Poisson(100)).value == 100
    assert sigma_squared(Thomas(25, 4, 0.03)).value == pytest.approx(100 + 100 ** 2 / 25)
    lg = sigma_squared(LGCP(0.5, 0.02, 100)).value
    # closed form for the small-variance expansion: 2 pi phi^2 (sum_k s^2k/(k! k^2)) lambda^2 + lambda
    series = sum(0.5 ** k / math.factorial(k) / k ** 2 for k in range(1, 30))
    assert lg == pytest.approx(100 + 100 ** 2 * 2 * math.pi * 0.02 ** 2 * series, rel=1e-8)


@pytest.mark.slow
def test_lgcp_sigma_squared_against_count_variance():
    model = LGCP(0.5, 0.02, 100.0)
    mc = sigma_squared_monte_carlo(model, substream(11, 0), reps=1500)
    assert sigma_squared(model).value == pytest.approx(mc.value, rel=0.1)


def test_sigma_squared_monte_carlo_poisson():
    mc = sigma_squared_monte_carlo(Poisson(100.0), substream(3, 0), reps=1500)
    assert mc.value == pytest.approx(100, rel=0.1)
    assert mc.method == "monte_carlo"


def test_gain():
    assert gain(10.0, 2.0) == 80.0
    assert gain(4.0, 4.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        gain(0.0, 1.0)


def test_median_bias_bound_poisson():
    b = median_bias_bound(Poisson(100), 16.0)
    assert b.cox == pytest.approx(4 / 48)
    me = exact_jittered_median(1600.0).jittered_median
    assert abs(me / 16 - 100) <= b.cox <= b.general
    assert median_bias_bound(PoissonHardCore(200, 0.05), 4.0, sigma2=40.0).cox is None


def test_local_limit_ratio():
    val, target = local_limit_ratio(100.0, 16.0)
    assert val == pytest.approx(target, rel=0.02)
    assert target == pytest.approx((2 * math.pi * 100) ** -0.5)


def test_clt_diagnostics_shape_and_sanity():
    d, = clt_diagnostics(Poisson(100.0), [2.0], 25, 200, seed=3)
    assert d.k_n == 25 and d.reps == 200 and d.local_limit_method == "exact"
    assert 0.1 < d.ecdf_variance < 0.5
    assert 0.8 < d.variance_ratio < 2.5
    with pytest.raises(ValueError):
        clt_diagnostics(Poisson(100.0), [1.0], 24, 10)


def test_clt_diagnostics_needs_intensity():
    with pytest.raises(ValueError):
        clt_diagnostics(PoissonHardCore(200, 0.05), [1.0], 9, 5, sigma2=50.0)
