import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from robust_intensity.geometry import Window
from robust_intensity.models import (LGCP, MaternCluster, Poisson, PoissonHardCore, Thomas, model_from_dict,
                                     model_to_dict, simulate)
from robust_intensity.randomness import substream


def _counts(cfg, window, reps, seed=0):
    return np.array([len(simulate(cfg, window, substream(seed, r))) for r in range(reps)])


def test_poisson_zero_intensity():
    p = simulate(Poisson(0.0), Window(2, 1.0), substream(0, 0))
    assert len(p) == 0


def test_poisson_counts_mean_and_variance():
    c = _counts(Poisson(100.0), Window(2, 1.0), 2000)
    assert c.mean() == pytest.approx(400, abs=4 * math.sqrt(400 / 2000))
    assert c.var(ddof=1) == pytest.approx(400, rel=0.1)


def test_poisson_points_uniform():
    p = simulate(Poisson(2000.0), Window(2, 1.0), substream(1, 0))
    from scipy import stats
    assert stats.kstest((p.points[:, 0] + 1) / 2, "uniform").pvalue > 1e-3


def test_lgcp_mu_relation():
    m = LGCP(0.5, 0.02, 100.0)
    assert math.exp(m.mu + m.variance / 2) == pytest.approx(100.0, rel=1e-14)
    assert m.pixel_spacing == 0.01


def test_lgcp_mean_intensity():
    c = _counts(LGCP(0.5, 0.02, 100.0), Window(2, 0.5), 400)
    # Var N ~ sigma^2 |W| with sigma^2 ~ 113
    assert c.mean() == pytest.approx(100.0, abs=4 * math.sqrt(113.4 / 400))


def test_thomas_and_matern_intensity():
    for cfg in (Thomas(25.0, 4.0, 0.03), MaternCluster(25.0, 4.0, 0.2)):
        c = _counts(cfg, Window(2, 1.0), 400)
        # Var N ~ (lam + lam^2/kappa)|W| = 500 * 4
        assert c.mean() == pytest.approx(400.0, abs=4 * math.sqrt(2000 / 400)), cfg


def test_matern_offspring_within_radius():
    cfg = MaternCluster(1.0, 50.0, 0.3)
    p = simulate(cfg, Window(2, 3.0), substream(4, 0))
    assert cfg.radius == pytest.approx(0.09)
    assert len(p) > 0


def test_cluster_parameter_validation():
    with pytest.raises(ValueError):
        Thomas(25.0, 4.0, float("nan"))
    with pytest.raises(ValueError):
        MaternCluster(0.0, 4.0, 0.1)


def test_hardcore_respects_distance():
    p = simulate(PoissonHardCore(200.0, 0.05), Window(2, 1.0), substream(2, 0))
    d, _ = cKDTree(p.points).query(p.points, k=2)
    assert d[:, 1].min() >= 0.05


def test_hardcore_without_interaction_is_poisson():
    c = _counts(PoissonHardCore(100.0, 0.0, mh_steps=50_000), Window(2, 1.0), 200)
    assert c.mean() == pytest.approx(400, abs=4 * math.sqrt(400 / 200))


def test_hardcore_default_steps():
    assert PoissonHardCore(200.0, 0.05).steps_for(Window(2, 1.0)) == 200_000
    assert PoissonHardCore(200.0, 0.05).steps_for(Window(2, 2.0)) == 800_000
    assert PoissonHardCore(200.0, 0.05, mh_steps=7).steps_for(Window(2, 1.0)) == 7


def test_simulation_is_deterministic():
    for cfg in (Poisson(50.0), LGCP(0.5, 0.05, 50.0), Thomas(10.0, 5.0, 0.05), PoissonHardCore(100.0, 0.05)):
        a = simulate(cfg, Window(2, 1.0), substream(8, 1))
        b = simulate(cfg, Window(2, 1.0), substream(8, 1))
        assert a.digest() == b.digest()


def test_model_dict_roundtrip():
    for cfg in (Poisson(100.0), LGCP(0.5, 0.02, 100.0), Thomas(25, 4, 0.03), PoissonHardCore(200, 0.05)):
        assert model_from_dict(model_to_dict(cfg)) == cfg
    assert model_from_dict({"type": "poisson", "lambda": 3}) == Poisson(3)
    with pytest.raises(ValueError):
        model_from_dict({"type": "gibbs"})
    with pytest.raises(ValueError, match="lam"):
        model_from_dict({"type": "poisson", "lambda": "x"})
