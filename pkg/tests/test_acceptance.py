"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL criterion N`` line (visible with
``pytest -s``) and then asserts the same condition, runtime limit included.
"""
import math
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest

from anomalyfwi.errors import IllConditionedWarning
from anomalyfwi.forward import AnomalyParams, ForwardConfig, Medium, analytic_forward, default_geometry, fd2d_forward
from anomalyfwi.harness import ExperimentSpec, bench_all
from anomalyfwi.signals import TimeSeries, WaveletSpec, estimate_source_signature, processed_misfits, ricker
from anomalyfwi.surrogate import gp_predict_many, gp_train, lhs_maximin, lhs_random, pca_fit
from anomalyfwi.uhsa import SaConfig, acceptance_probability
from anomalyfwi.ukf import GaussianState, UkfConfig, sigma_points, ukf_update

from conftest import ROOT
from test_forward import FD_CFG, FD_GEO, FD_REC, _crossing, _green_trace

BOUNDS = np.array([[-80.0, 80.0], [-40.0, 40.0]])


def verdict(n, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.2f} s < {limit:g} s]")
    return ok


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.1 * np.eye(n)


def test_criterion_1_ukf_algebra():
    t0 = time.perf_counter()
    cfg = UkfConfig(Q=[[0.0]], R=[[0.0]], s_min=[1.0], n_iter=1, lam=2.0)
    up = ukf_update(GaussianState([0.0], [[1.0]]), cfg, lambda m: np.array([m[0]]))
    hand = max(abs(up.state.mean[0] - 1.0), abs(up.state.cov[0, 0]))
    worst_w = worst_m = 0.0
    rng = np.random.default_rng(1)
    for n in (1, 2, 3, 5):
        for _ in range(100):
            P, mean = random_spd(rng, n), rng.normal(size=n)
            sig = sigma_points(GaussianState(mean, P), 3.0 - n)
            W, d = sig.weights, sig.points - mean
            worst_w = max(worst_w, abs(W.sum() - 1.0))
            rec = (W[:, None] * d).T @ d
            worst_m = max(worst_m, np.abs(W @ sig.points - mean).max(),
                          np.abs(rec - P).max() / max(1.0, np.abs(P).max()))
    ok = hand <= 1e-12 and worst_w <= 1e-10 and worst_m <= 1e-10
    assert verdict(1, ok, f"hand example err {hand:.1e}, weight err {worst_w:.1e}, moment err {worst_m:.1e}",
                   time.perf_counter() - t0, 1.0)


def test_criterion_2_affine_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        n, r = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        A, b = rng.normal(size=(r, n)), rng.normal(size=r)
        P, mean = random_spd(rng, n), rng.normal(size=n)
        cfg = UkfConfig(np.zeros((n, n)), np.eye(r), np.zeros(r), lam=3.0 - n)
        up = ukf_update(GaussianState(mean, P), cfg, lambda m: A @ m + b)
        s, ms = A @ mean + b, P @ A.T
        worst = max(worst, np.abs(up.s_hat - s).max() / max(1.0, np.abs(s).max()),
                    np.abs(up.P_ms - ms).max() / max(1.0, np.abs(ms).max()))
    assert verdict(2, worst <= 1e-9, f"max relative error {worst:.1e} over 50 maps", time.perf_counter() - t0, 1.0)


def test_criterion_3_sa_semantics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    triples = [(0.5, 1.0, 1.0), (1.0, 1.0, 1.0), (2.0, 0.5, 9.49), (0.3, 0.2, 1.44), (5.0, 2.0, 0.5)]
    z_max = 0.0
    for dS, dS_bar, T in triples:
        P = acceptance_probability(dS, dS_bar, T)
        freq = np.mean(rng.random(10_000) < P)
        z_max = max(z_max, abs(freq - P) / math.sqrt(P * (1 - P) / 10_000))
    exact = all(SaConfig(T0, a, 100, BOUNDS, np.eye(2)).temperature(c) == T0 * a**c
                for T0, a in ((9.49, 0.95), (1.44, 0.9)) for c in range(100))
    ok = z_max <= 3.0 and exact
    assert verdict(3, ok, f"max |z| {z_max:.2f}, cooling exact {exact}", time.perf_counter() - t0, 1.0)


def test_criterion_4_gp_contract():
    t0 = time.perf_counter()
    unit = [[0.0, 1.0], [0.0, 1.0]]
    X = lhs_maximin(32, unit, np.random.default_rng(0), iterations=5, swaps=100)
    y = np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1]) + 0.5 * X[:, 0] * X[:, 1] + X[:, 0] ** 2
    model = gp_train(X, y, unit, eta=0.0, rng=np.random.default_rng(1))
    interp = np.max(np.abs(gp_predict_many(model, X)[0] - y)) / np.max(np.abs(y))

    rng = np.random.default_rng(2)
    X1 = lhs_random(12, [[0.0, 1.0]], rng)
    m1 = gp_train(X1, np.sin(2 * np.pi * X1[:, 0]), [[0.0, 1.0]], rng=np.random.default_rng(3))
    xt = rng.random(100)[:, None]
    rmse = float(np.sqrt(np.mean((gp_predict_many(m1, xt)[0] - np.sin(2 * np.pi * xt[:, 0])) ** 2)))
    ok = interp <= 1e-8 and rmse <= 0.05
    assert verdict(4, ok, f"interpolation err {interp:.1e}, sine holdout RMSE {rmse:.4f}",
                   time.perf_counter() - t0, 30.0)


def test_criterion_5_pca_contract():
    t0 = time.perf_counter()
    Y = np.random.default_rng(5).normal(size=(20, 50))
    p = pca_fit(Y, n_components=20)
    rt = np.linalg.norm(p.inverse(p.transform(Y)) - Y) / np.linalg.norm(Y)
    eig = np.sort(np.linalg.eigvalsh(np.cov(Y, rowvar=False)))[::-1][: p.k]
    var = float(np.max(np.abs(p.variances - eig)))
    ok = rt <= 1e-10 and var <= 1e-8
    assert verdict(5, ok, f"round trip {rt:.1e}, variance err {var:.1e}", time.perf_counter() - t0, 1.0)


def test_criterion_6_forward_models():
    t0 = time.perf_counter()
    geo, med = default_geometry(), Medium()
    cfg = ForwardConfig(wavelet=WaveletSpec(f_c=100e3), duration=1e-4, dt=1e-7, kappa=0.0)
    seis = analytic_forward(None, geo, med, cfg)
    r_d = np.hypot(*(geo.receivers - np.asarray(geo.source)).T)
    expected = cfg.wavelet.delay + r_d / med.v_p
    direct = float(np.max(np.abs(seis.times[np.argmax(seis.data, axis=1)] - expected)) / cfg.dt)

    hole = AnomalyParams(np.array([-0.010, 0.020]), 0.008)
    cfg_h = replace(cfg, kappa=-0.5)
    scat = analytic_forward(hole, geo, med, cfg_h).data - seis.data
    path = np.hypot(*(hole.m - np.asarray(geo.source))) + np.hypot(*(geo.receivers - hole.m).T) - 2 * hole.radius
    t_s = cfg.wavelet.delay + path / med.v_p
    scattered = float(np.max(np.abs(seis.times[np.argmin(scat, axis=1)] - t_s)) / cfg.dt)

    fd = fd2d_forward(None, FD_GEO, med, FD_CFG)
    period = FD_CFG.fd_time_step(med)
    w = FD_CFG.wavelet
    offsets = []
    for j in range(FD_GEO.n_receivers):
        r = np.hypot(*(FD_REC[j] - np.asarray(FD_GEO.source)))
        win = fd.times <= r / med.v_p + w.delay + 0.5 / w.f_c
        ref = _green_trace(r, fd.times, w)
        t_fd = _crossing(fd.times, fd.data[j], 0.05 * np.abs(fd.data[j][win]).max())
        t_ray = _crossing(fd.times, ref, 0.05 * np.abs(ref[win]).max())
        offsets.append(abs(t_fd - t_ray) / period)
    back = fd2d_forward(None, FD_GEO.swapped(1), med, FD_CFG)
    recip = np.linalg.norm(fd.data[1] - back.data[1]) / np.linalg.norm(fd.data[1])
    ok = direct <= 1.0 and scattered <= 1.0 and max(offsets) <= 2.0 and recip <= 0.01
    assert verdict(6, ok, f"analytic offsets {direct:.2f}/{scattered:.2f} samples, FD onset "
                          f"{max(offsets):.2f} periods, reciprocity {recip:.1e}",
                   time.perf_counter() - t0, 120.0)


def test_criterion_7_source_signature_round_trip():
    t0 = time.perf_counter()
    geo, med = default_geometry(), Medium()
    f = 100e3
    cfg = ForwardConfig(wavelet=WaveletSpec(f_c=f), duration=2e-4, dt=1e-7)
    t = np.arange(cfg.n_samples) * cfg.dt
    q = ricker(t, 0.8 * f, 1.5 / f) + 0.4 * ricker(t, 1.2 * f, 2.2 / f)
    true_cfg = replace(cfg, wavelet=WaveletSpec.tabulated(TimeSeries(0.0, cfg.dt, q), f_c=f))
    ref = cfg.wavelet.sample(cfg.n_samples, cfg.dt)

    # estimate on the undisturbed plate, then use it with the hole present
    plate = analytic_forward(None, geo, med, true_cfg)
    ideal = analytic_forward(None, geo, med, cfg)
    est = estimate_source_signature(plate.trace(0), ideal.trace(0), ref)
    l2 = np.linalg.norm(est.values - q) / np.linalg.norm(q)

    hole = AnomalyParams(np.array([-0.010, 0.020]), 0.008)
    obs = analytic_forward(hole, geo, med, true_cfg)
    s_ricker = processed_misfits(obs, analytic_forward(hole, geo, med, cfg), 8.8e-5).sum()
    est_cfg = replace(cfg, wavelet=WaveletSpec.tabulated(est, f_c=f))
    s_est = processed_misfits(obs, analytic_forward(hole, geo, med, est_cfg), 8.8e-5).sum()
    reduction = 1.0 - s_est / s_ricker
    ok = l2 <= 0.01 and reduction >= 0.9
    assert verdict(7, ok, f"wavelet L2 err {l2:.2%}, misfit reduction {reduction:.3%}",
                   time.perf_counter() - t0, 60.0)


@pytest.fixture(scope="module")
def bench_pair(tmp_path_factory):
    spec = ExperimentSpec.load(ROOT / "configs" / "bench_analytic.json")
    runs = []
    for tag in ("first", "second"):
        out = tmp_path_factory.mktemp(tag)
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            report = bench_all(spec, str(out))
        runs.append((report, out, time.perf_counter() - t0))
    return spec, runs


def test_criterion_8_end_to_end_inversion(bench_pair):
    spec, runs = bench_pair
    report, _, elapsed = runs[0]
    dist = {r.strategy: r.distance_to(spec.true_anomaly) for r in report["rows"]}
    detail = ", ".join(f"{k} {v:.2f} mm" for k, v in dist.items())
    ok = len(dist) == 5 and all(r.status == "ok" for r in report["rows"]) and max(dist.values()) <= 2.5
    assert verdict(8, ok, detail, elapsed, 600.0)


def test_criterion_9_efficiency_ordering(bench_pair):
    _, runs = bench_pair
    report, _, elapsed = runs[0]
    calls = {r.strategy: r.calls for r in report["rows"]}
    ok = (calls["UHSA-2"] < 0.5 * calls["PSO-direct"] and calls["GP-SO"] == 128
          and calls["GP-MO"] == 128 and calls["PSO-direct"] <= 650)
    detail = ", ".join(f"{k} {v}" for k, v in calls.items())
    assert verdict(9, ok, f"forward calls: {detail}", elapsed, 600.0)


def test_criterion_10_determinism(bench_pair):
    _, runs = bench_pair
    (_, a, ta), (_, b, tb) = runs
    same = (a / "results.json").read_bytes() == (b / "results.json").read_bytes()
    assert verdict(10, same, f"results.json identical across two runs: {same}", ta + tb, 1200.0)
