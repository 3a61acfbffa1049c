import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from anomalyfwi.errors import InvalidArgumentError, NumericalFailure
from anomalyfwi.ukf import (
    GaussianState,
    UkfConfig,
    robust_cholesky,
    sigma_points,
    sigma_weights,
    ukf_run,
    ukf_step,
    ukf_update,
)


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.1 * np.eye(n)


def test_scalar_hand_example():
    state = GaussianState([0.0], [[1.0]])
    cfg = UkfConfig(Q=[[0.0]], R=[[0.0]], s_min=[1.0], n_iter=1, lam=2.0)
    up = ukf_update(state, cfg, lambda m: np.array([m[0]]))
    np.testing.assert_allclose(np.sort(up.sigma.points[:, 0]), [-math.sqrt(3), 0.0, math.sqrt(3)], atol=1e-15)
    assert abs(up.s_hat[0]) <= 1e-12
    assert abs(up.P_s[0, 0] - 1.0) <= 1e-12
    assert abs(up.P_ms[0, 0] - 1.0) <= 1e-12
    assert abs(up.gain[0, 0] - 1.0) <= 1e-12
    assert abs(up.state.mean[0] - 1.0) <= 1e-12
    assert abs(up.state.cov[0, 0]) <= 1e-12


def test_identity_sigma_set():
    sig = sigma_points(GaussianState([0.0, 0.0], np.eye(2)), 1.0)
    r3 = math.sqrt(3)
    expected = np.array([[0, 0], [r3, 0], [0, r3], [-r3, 0], [0, -r3]])
    np.testing.assert_allclose(sig.points, expected, atol=1e-15)
    np.testing.assert_allclose(sig.weights, [1 / 3, 1 / 6, 1 / 6, 1 / 6, 1 / 6], rtol=1e-15)


@given(n=st.integers(1, 8), lam=st.floats(-0.9, 10.0))
def test_weights_sum_to_one(n, lam):
    assert abs(sigma_weights(n, lam).sum() - 1.0) <= 1e-14


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_moment_reconstruction(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(100):
        P = random_spd(rng, n)
        mean = rng.normal(size=n)
        sig = sigma_points(GaussianState(mean, P), 3.0 - n)
        W = sig.weights
        assert abs(W.sum() - 1.0) <= 1e-10
        np.testing.assert_allclose(W @ sig.points, mean, atol=1e-10)
        d = sig.points - mean
        rec = (W[:, None] * d).T @ d
        assert np.max(np.abs(rec - P)) <= 1e-10 * max(1.0, np.abs(P).max())


def test_affine_exactness():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n, r = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        A, b = rng.normal(size=(r, n)), rng.normal(size=r)
        P = random_spd(rng, n)
        mean = rng.normal(size=n)
        cfg = UkfConfig(np.zeros((n, n)), np.eye(r), np.zeros(r), lam=3.0 - n)
        up = ukf_update(GaussianState(mean, P), cfg, lambda m: A @ m + b)
        expect_s = A @ mean + b
        expect_ms = P @ A.T
        assert np.max(np.abs(up.s_hat - expect_s)) <= 1e-9 * max(1.0, np.abs(expect_s).max())
        assert np.max(np.abs(up.P_ms - expect_ms)) <= 1e-9 * max(1.0, np.abs(expect_ms).max())


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
@example(seed=422, n=4)
@example(seed=0, n=4)
@settings(max_examples=40, deadline=None)
def test_posterior_covariance_symmetric_psd(seed, n):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, n)
    C = rng.normal(size=(3, n))
    cfg = UkfConfig(0.1 * np.eye(n), 0.5 * np.eye(3), np.zeros(3))
    f = lambda m: (C @ m) ** 2  # noqa: E731
    if n > 3:
        # negative centre weight: an indefinite misfit covariance is a declared failure
        try:
            out = ukf_step(GaussianState(rng.normal(size=n), P), cfg, f)
        except NumericalFailure as exc:
            assert "misfit covariance" in str(exc)
            return
    else:
        out = ukf_step(GaussianState(rng.normal(size=n), P), cfg, f)
    cov = out.cov
    assert np.max(np.abs(cov - cov.T)) <= 1e-10 * max(1.0, np.abs(cov).max())
    assert np.linalg.eigvalsh(cov).min() >= -1e-8 * np.trace(cov)


def test_zero_innovation_keeps_mean():
    state = GaussianState([0.3, -0.2], np.eye(2))
    f = lambda m: np.array([m[0] + 2 * m[1], m[0] ** 2])  # noqa: E731
    probe = UkfConfig(np.zeros((2, 2)), np.eye(2), np.zeros(2))
    s_hat = ukf_update(state, probe, f).s_hat
    out = ukf_step(state, UkfConfig(np.zeros((2, 2)), np.eye(2), s_hat), f)
    np.testing.assert_allclose(out.mean, state.mean, atol=1e-14)


def test_stationary_point_zero_gain():
    state = GaussianState([0.0, 0.0], np.eye(2))
    cfg = UkfConfig(np.zeros((2, 2)), np.eye(1), np.zeros(1))
    up = ukf_update(state, cfg, lambda m: np.array([m @ m]))
    np.testing.assert_allclose(up.gain, 0.0, atol=1e-14)
    np.testing.assert_allclose(up.state.cov, up.P_m, atol=1e-14)


def test_step_call_count():
    calls = []
    cfg = UkfConfig(np.zeros((3, 3)), np.eye(1), np.zeros(1))
    ukf_step(GaussianState(np.zeros(3), np.eye(3)), cfg, lambda m: calls.append(1) or np.array([m @ m]))
    assert len(calls) == 7


def test_run_on_quadratic_bowl():
    target = np.array([-10.0, 20.0])
    start = target + 30.0 / math.sqrt(2) * np.array([1.0, 1.0])
    f = lambda m: np.array([np.sum((m - target) ** 2)])  # noqa: E731
    cfg = UkfConfig(0.1 * np.diag([16.0, 16.0]), np.array([[1.0]]), np.zeros(1), n_iter=10)
    run = ukf_run(GaussianState(start, np.diag([16.0, 16.0])), cfg, f)
    assert np.linalg.norm(run.best_mean - target) <= 3.0
    assert run.best_total <= run.records[0].total
    assert run.best_total == min(r.total for r in run.records)
    # start evaluation plus (2n + 1) + 1 per step
    assert run.calls == 1 + 10 * 6


def test_run_counts_known_start():
    calls = []

    def f(m):
        calls.append(1)
        return np.array([m @ m])

    cfg = UkfConfig(np.eye(2), np.eye(1), np.zeros(1), n_iter=3)
    run = ukf_run(GaussianState([1.0, 1.0], np.eye(2)), cfg, f, start_misfits=np.array([2.0]))
    assert run.calls == len(calls) == 18


def test_sigma_points_clamped_to_bounds():
    seen = []
    cfg = UkfConfig(np.zeros((2, 2)), np.eye(1), np.zeros(1), bounds=[[0.0, 1.0], [0.0, 1.0]])
    ukf_update(GaussianState([0.9, 0.1], np.eye(2)), cfg, lambda m: seen.append(m.copy()) or np.array([1.0]))
    pts = np.array(seen)
    assert pts.min() >= 0.0 and pts.max() <= 1.0


def test_invalid_arguments():
    with pytest.raises(InvalidArgumentError):
        UkfConfig(np.eye(2), np.eye(1), np.zeros(1), n_iter=0)
    with pytest.raises(InvalidArgumentError):
        UkfConfig(np.eye(2), np.eye(2), np.zeros(1))
    with pytest.raises(InvalidArgumentError):
        GaussianState([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        sigma_weights(2, -2.0)


def test_cholesky_jitter_repair():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])  # singular PSD
    L = robust_cholesky(A)
    assert np.max(np.abs(L @ L.T - A)) <= 1e-8
    with pytest.raises(NumericalFailure):
        robust_cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))
