import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anomalyfwi.errors import InvalidArgumentError
from anomalyfwi.uhsa import (
    SaConfig,
    acceptance_probability,
    cool,
    derive_R_smin,
    propose_uniform,
    temperature_for_acceptance,
    uhsa_optimize,
)
from anomalyfwi.ukf import UkfConfig

BOUNDS = np.array([[-80.0, 80.0], [-40.0, 40.0]])


class FixedRng:
    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return np.full(size, self.u)


def bowl(x):
    d = np.asarray(x) - np.array([-10.0, 20.0])
    mv = np.array([d[0] ** 2, d[1] ** 2]) + 1e-3
    return mv, float(mv.sum())


def test_proposal_extremes():
    np.testing.assert_array_equal(propose_uniform(BOUNDS, FixedRng(0.0)), BOUNDS[:, 0])
    np.testing.assert_array_equal(propose_uniform(BOUNDS, FixedRng(1.0)), BOUNDS[:, 1])


def test_proposal_mean():
    rng = np.random.default_rng(0)
    X = np.array([propose_uniform(BOUNDS, rng) for _ in range(10_000)])
    se = (BOUNDS[:, 1] - BOUNDS[:, 0]) / math.sqrt(12 * 10_000)
    assert np.all(np.abs(X.mean(axis=0) - BOUNDS.mean(axis=1)) <= 3 * se)
    assert np.all(X >= BOUNDS[:, 0]) and np.all(X <= BOUNDS[:, 1])


def test_acceptance_values():
    assert acceptance_probability(0.0, 1.0, 2.0) == 1.0
    assert acceptance_probability(-3.0, 1.0, 2.0) == 1.0
    assert acceptance_probability(2.0 * 1.5, 1.5, 2.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    for bad in [(1.0, 0.0, 1.0), (1.0, 1.0, 0.0), (1.0, -1.0, 1.0)]:
        with pytest.raises(InvalidArgumentError):
            acceptance_probability(*bad)


@pytest.mark.parametrize("dS,dS_bar,T", [(0.5, 1.0, 1.0), (1.0, 1.0, 1.0), (2.0, 0.5, 9.49),
                                         (0.3, 0.2, 1.44), (5.0, 2.0, 0.5)])
def test_acceptance_frequency(dS, dS_bar, T):
    rng = np.random.default_rng(int(1000 * dS + T))
    P = acceptance_probability(dS, dS_bar, T)
    freq = np.mean(rng.random(10_000) < P)
    assert abs(freq - P) <= 3 * math.sqrt(P * (1 - P) / 10_000)


@pytest.mark.parametrize("T0,alpha,first", [(9.49, 0.95, 9.0155), (1.44, 0.9, 1.296)])
def test_cooling_schedule(T0, alpha, first):
    assert cool(T0, alpha) == pytest.approx(first, rel=1e-15)
    cfg = SaConfig(T0, alpha, 50, BOUNDS, np.eye(2))
    T = T0
    for c in range(50):
        assert cfg.temperature(c) == pytest.approx(T, rel=1e-13)
        assert cfg.temperature(c) == T0 * alpha**c
        T = cool(T, alpha)


def test_cooling_rejects_bad_alpha():
    for a in (0.0, 1.0, 1.5):
        with pytest.raises(InvalidArgumentError):
            cool(1.0, a)


def test_initial_temperature_from_target():
    assert temperature_for_acceptance(0.9) == pytest.approx(9.49, abs=5e-3)
    assert temperature_for_acceptance(0.5) == pytest.approx(1.44, abs=5e-3)


def test_derive_R_smin():
    s_u = np.arange(1.0, 31.0)
    s_min, R = derive_R_smin(s_u, 0.8, 0.2)
    np.testing.assert_allclose(s_min, 0.8 * s_u)
    np.testing.assert_allclose(R, np.diag(0.2 * s_u))
    assert R.shape == (30, 30)
    s0, _ = derive_R_smin(s_u, 0.0, 0.1)
    assert np.all(s0 == 0.0)
    with pytest.raises(InvalidArgumentError):
        derive_R_smin([1.0, 0.0], 0.5, 0.5)


def _ukf_cfg(n_iter=2):
    return UkfConfig(0.4 * np.eye(2), np.diag([1.0, 1.0]), np.zeros(2), n_iter)


def test_infinite_threshold_runs_all_cycles():
    cfg = SaConfig(1.44, 0.9, 25, BOUNDS, 4 * np.eye(2), min_dist=0.0, stop_threshold=-math.inf)
    _, tr = uhsa_optimize(cfg, _ukf_cfg(), bowl, np.random.default_rng(3))
    assert len(tr.cycles) == 25


def test_early_stop_below_threshold():
    cfg = SaConfig(1.44, 0.9, 200, BOUNDS, 4 * np.eye(2), stop_threshold=50.0)
    _, tr = uhsa_optimize(cfg, _ukf_cfg(), bowl, np.random.default_rng(3))
    assert tr.best_misfit < 50.0
    assert len(tr.cycles) < 200


def test_hot_limit_accepts_everything():
    cfg = SaConfig(1e300, 0.5, 30, BOUNDS, 4 * np.eye(2), min_dist=0.0)
    _, tr = uhsa_optimize(cfg, _ukf_cfg(1), bowl, np.random.default_rng(4))
    assert all(c.status == "accepted" for c in tr.cycles)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_best_monotone_and_call_accounting(seed):
    n_iter = 2
    calls = []

    def ev(x):
        calls.append(1)
        return bowl(x)

    cfg = SaConfig(9.49, 0.95, 20, BOUNDS, 16 * np.eye(2), min_dist=10.0)
    _, tr = uhsa_optimize(cfg, _ukf_cfg(n_iter), ev, np.random.default_rng(seed))
    best = [c.best_misfit for c in tr.cycles]
    assert all(b1 <= b0 for b0, b1 in zip(best, best[1:]))
    expected = tr.n_evaluated + tr.n_accepted * n_iter * (2 * 2 + 1 + 1)
    assert tr.calls == len(calls) == expected
    assert tr.best_misfit == min(best)


def test_min_distance_skips_close_proposals():
    cfg = SaConfig(9.49, 0.95, 100, BOUNDS, 16 * np.eye(2), min_dist=30.0)
    _, tr = uhsa_optimize(cfg, _ukf_cfg(1), bowl, np.random.default_rng(8))
    evaluated = np.array([c.proposal for c in tr.cycles if c.status in ("accepted", "rejected")])
    d = np.linalg.norm(evaluated[:, None] - evaluated[None], axis=-1)
    assert d[np.triu_indices(len(evaluated), 1)].min() >= 30.0
    assert any(c.status == "too_close" for c in tr.cycles)


def test_deterministic_trace():
    cfg = SaConfig(1.44, 0.9, 30, BOUNDS, 4 * np.eye(2), min_dist=5.0)
    a = uhsa_optimize(cfg, _ukf_cfg(), bowl, np.random.default_rng(12))[1]
    b = uhsa_optimize(cfg, _ukf_cfg(), bowl, np.random.default_rng(12))[1]
    assert [(c.status, tuple(c.proposal), c.best_misfit) for c in a.cycles] == \
        [(c.status, tuple(c.proposal), c.best_misfit) for c in b.cycles]


def test_failed_evaluation_is_recorded():
    def flaky(x):
        if x[0] > 0:
            raise RuntimeError("solver blew up")
        return bowl(x)

    cfg = SaConfig(1.44, 0.9, 20, BOUNDS, 4 * np.eye(2))
    _, tr = uhsa_optimize(cfg, UkfConfig(0.4 * np.eye(2), np.eye(2), np.zeros(2), 1, bounds=[[-80, 0], [-40, 40]]),
                          flaky, np.random.default_rng(1))
    assert any(c.status == "failed" for c in tr.cycles)
    assert tr.best_x is not None


def test_sa_config_validation():
    with pytest.raises(InvalidArgumentError):
        SaConfig(1.0, 1.0, 10, BOUNDS, np.eye(2))
    with pytest.raises(InvalidArgumentError):
        SaConfig(1.0, 0.5, 0, BOUNDS, np.eye(2))
    with pytest.raises(InvalidArgumentError):
        SaConfig(1.0, 0.5, 10, BOUNDS, np.eye(2), min_dist=-1.0)
