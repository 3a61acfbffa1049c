"""Unscented Kalman filter used as a derivative-free local minimiser.

The filter treats the per-receiver misfit vector as the measurement and
``s_min`` (the best misfit one expects to reach) as its observed value, so
each update moves the parameter mean towards lower misfits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, NumericalFailure


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        n = mean.size
        if cov.shape != (n, n):
            raise InvalidArgumentError(f"covariance must be {n}x{n}, got {cov.shape}")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise InvalidArgumentError("covariance must be symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray
    weights: np.ndarray


@dataclass
class UkfConfig:
    """Filter settings.

    ``lam`` defaults to ``3 - n``. ``bounds`` (shape ``(n, 2)``), when
    given, clamps sigma points and updated means before evaluation.
    """

    Q: np.ndarray
    R: np.ndarray
    s_min: np.ndarray
    n_iter: int = 4
    lam: float | None = None
    bounds: np.ndarray | None = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.s_min = np.asarray(self.s_min, dtype=float).reshape(-1)
        if self.R.shape != (self.s_min.size, self.s_min.size):
            raise InvalidArgumentError("R must be r x r with r = len(s_min)")
        if self.Q.shape[0] != self.Q.shape[1]:
            raise InvalidArgumentError("Q must be square")
        if self.n_iter < 1:
            raise InvalidArgumentError("the filter needs at least one iteration")
        if self.bounds is not None:
            self.bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)

    def scaling(self, n: int) -> float:
        return 3.0 - n if self.lam is None else float(self.lam)


def robust_cholesky(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, retrying with diagonal jitter on failure.

    Jitter starts at ``1e-10 * trace`` and grows tenfold for up to three
    retries.
    """
    A = 0.5 * (A + A.T)
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        pass
    tr = float(np.trace(A))
    base = 1e-10 * tr if tr > 0 else 1e-10
    eye = np.eye(A.shape[0])
    for k in range(3):
        try:
            return linalg.cholesky(A + base * 10.0**k * eye, lower=True)
        except linalg.LinAlgError:
            continue
    raise NumericalFailure(f"{what} is not positive definite after jitter repair")


def sigma_weights(n: int, lam: float) -> np.ndarray:
    c = n + lam
    if not c > 0:
        raise InvalidArgumentError(f"n + lambda must be positive, got {c}")
    w = np.full(2 * n + 1, 1.0 / (2.0 * c))
    w[0] = lam / c
    return w


def sigma_points(state: GaussianState, lam: float) -> SigmaSet:
    n = state.n
    weights = sigma_weights(n, lam)
    L = robust_cholesky((n + lam) * state.cov, "parameter covariance")
    pts = np.empty((2 * n + 1, n))
    pts[0] = state.mean
    pts[1 : n + 1] = state.mean + L.T
    pts[n + 1 :] = state.mean - L.T
    return SigmaSet(pts, weights)


def _clamp(x, bounds):
    if bounds is None:
        return x
    return np.clip(x, bounds[:, 0], bounds[:, 1])


def _nearest_psd(A: np.ndarray) -> np.ndarray:
    """Symmetrize ``A`` and clip negative eigenvalues when it is indefinite.

    A negative centre weight (``lambda < 0``, i.e. ``n > 3`` at the default
    scaling) can leave the updated covariance indefinite; rounding-level
    negatives are kept as they are.
    """
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    if w.min() >= -1e-10 * max(float(np.trace(A)), 0.0):
        return A
    A = (V * np.clip(w, 0.0, None)) @ V.T
    return 0.5 * (A + A.T)


@dataclass
class UkfUpdate:
    """Intermediate quantities of one filter step."""

    sigma: SigmaSet
    misfits: np.ndarray
    s_hat: np.ndarray
    P_m: np.ndarray
    P_s: np.ndarray
    P_ms: np.ndarray
    gain: np.ndarray
    state: GaussianState


def ukf_update(state: GaussianState, cfg: UkfConfig, evaluate) -> UkfUpdate:
    """One filter step with every intermediate quantity exposed.

    ``evaluate`` maps a parameter vector to its misfit vector and is called
    exactly ``2n + 1`` times.
    """
    n = state.n
    lam = cfg.scaling(n)
    sig = sigma_points(state, lam)
    pts = _clamp(sig.points, cfg.bounds)
    sig = SigmaSet(pts, sig.weights)
    W = sig.weights
    S = np.vstack([np.asarray(evaluate(p), dtype=float).reshape(-1) for p in pts])
    if S.shape[1] != cfg.s_min.size:
        raise InvalidArgumentError(
            f"misfit vectors have length {S.shape[1]}, s_min has {cfg.s_min.size}"
        )
    s_hat = W @ S
    dm = pts - state.mean
    ds = S - s_hat
    P_m = (W[:, None] * dm).T @ dm + cfg.Q
    P_s = (W[:, None] * ds).T @ ds + cfg.R
    P_ms = (W[:, None] * dm).T @ ds
    L = robust_cholesky(P_s, "misfit covariance")
    gain = linalg.cho_solve((L, True), P_ms.T).T
    mean = state.mean + gain @ (cfg.s_min - s_hat)
    cov = _nearest_psd(P_m - gain @ P_s @ gain.T)
    return UkfUpdate(sig, S, s_hat, P_m, P_s, P_ms, gain, GaussianState(mean, cov))


def ukf_step(state: GaussianState, cfg: UkfConfig, evaluate) -> GaussianState:
    return ukf_update(state, cfg, evaluate).state


@dataclass
class UkfRecord:
    mean: np.ndarray
    cov: np.ndarray
    misfits: np.ndarray
    total: float


@dataclass
class UkfRun:
    best_mean: np.ndarray
    best_total: float
    best_misfits: np.ndarray
    records: list = field(default_factory=list)
    calls: int = 0


def ukf_run(start: GaussianState, cfg: UkfConfig, evaluate, start_misfits=None) -> UkfRun:
    """Iterate the filter ``cfg.n_iter`` times and keep the best visited mean.

    Each step costs ``2n + 1`` evaluations plus one at the updated mean.
    ``start_misfits`` avoids re-evaluating a start point whose misfit is
    already known; otherwise the start costs one more evaluation.
    """
    if cfg.n_iter < 1:
        raise InvalidArgumentError("the filter needs at least one iteration")
    calls = 0
    if start_misfits is None:
        start_misfits = np.asarray(evaluate(start.mean), dtype=float)
        calls += 1
    start_misfits = np.asarray(start_misfits, dtype=float)
    records = [UkfRecord(start.mean.copy(), start.cov.copy(), start_misfits, float(start_misfits.sum()))]
    best = records[0]
    state = start
    for _ in range(cfg.n_iter):
        state = ukf_step(state, cfg, evaluate)
        calls += 2 * state.n + 1
        mean = _clamp(state.mean, cfg.bounds)
        if not np.array_equal(mean, state.mean):
            state = GaussianState(mean, state.cov)
        mv = np.asarray(evaluate(state.mean), dtype=float)
        calls += 1
        rec = UkfRecord(state.mean.copy(), state.cov.copy(), mv, float(mv.sum()))
        records.append(rec)
        if rec.total < best.total:
            best = rec
    return UkfRun(best.mean, best.total, best.misfits, records, calls)

