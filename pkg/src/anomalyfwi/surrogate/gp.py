"""Gaussian-process regression (ordinary kriging) with an anisotropic
squared-exponential kernel and a nugget.

Inputs are mapped affinely to the unit hypercube before the kernel
``k(u, u') = exp(-sum_j theta_j (u_j - u'_j)**2)`` is applied. The constant
trend is estimated by generalised least squares.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from ..errors import (DegenerateInputWarning, IllConditionedWarning, InvalidArgumentError,
                      NumericalFailure)

THETA_BOUNDS = (1e-2, 1e3)
ETA_BOUNDS = (1e-10, 1e-2)
N_RESTARTS = 10
_PENALTY = 1e20
# hyperparameters whose kernel matrix exceeds this condition estimate are
# treated as infeasible during the search
MAX_CONDITION = 1e10


@dataclass(frozen=True)
class GpModel:
    X: np.ndarray  # training inputs, physical units
    y: np.ndarray
    lower: np.ndarray  # normalisation box
    upper: np.ndarray
    theta: np.ndarray
    eta: float
    c: float  # constant trend
    sigma2: float  # process variance
    beta: np.ndarray  # K^-1 (y - c)
    chol: np.ndarray  # lower Cholesky factor of K + eta I
    one_kinv_one: float
    objective: str = "fixed"

    @property
    def n_inputs(self) -> int:
        return self.X.shape[1]

    def normalize(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.lower) / (self.upper - self.lower)


def _sq_diffs(U: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape ``(n, N, N)``."""
    return (U.T[:, :, None] - U.T[:, None, :]) ** 2


def kernel_matrix(A, B, theta) -> np.ndarray:
    """Squared-exponential correlations between rows of ``A`` and ``B`` (already normalised)."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A[:, None, :] - B[None, :, :]) ** 2
    return np.exp(-d2 @ np.asarray(theta, dtype=float))


def _normalization(X, bounds):
    if bounds is None:
        lo, hi = X.min(axis=0), X.max(axis=0)
    else:
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        lo, hi = b[:, 0], b[:, 1]
    if lo.size != X.shape[1]:
        raise InvalidArgumentError("bounds and inputs disagree on dimension")
    if np.any(hi <= lo):
        raise InvalidArgumentError("cannot normalise inputs with zero range")
    return lo, hi


def _check_data(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise InvalidArgumentError(f"{X.shape[0]} inputs but {y.size} responses")
    if X.shape[0] < 1:
        raise InvalidArgumentError("at least one training point is required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("training data must be finite")
    return X, y


def _refined_solve(L, K, b, steps):
    x = linalg.cho_solve((L, True), b)
    for _ in range(steps):
        x = x + linalg.cho_solve((L, True), b - K @ x)
    return x


def _solve_parts(L, y, K=None, refine=0):
    """GLS trend, weights ``K^-1 (y - c)`` and process variance.

    With ``K`` given, ``refine`` steps of iterative refinement tighten the
    residual of the near-singular systems met with small nuggets.
    """
    ones = np.ones(y.size)
    if K is None:
        refine = 0
    k1 = _refined_solve(L, K, ones, refine)
    one_k_one = float(ones @ k1)
    c = float(k1 @ y) / one_k_one
    r = y - c
    beta = _refined_solve(L, K, r, refine)
    sigma2 = float(r @ beta) / y.size
    return c, beta, max(sigma2, 0.0), one_k_one


def gp_fit(X, y, theta, eta: float = 0.0, bounds=None) -> GpModel:
    """Condition a GP on ``(X, y)`` with fixed hyperparameters."""
    X, y = _check_data(X, y)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != X.shape[1] or np.any(theta <= 0):
        raise InvalidArgumentError("theta needs one positive entry per input dimension")
    if eta < 0:
        raise InvalidArgumentError("nugget must be nonnegative")
    lo, hi = _normalization(X, bounds) if X.shape[0] > 1 or bounds is not None else (X[0] - 0.5, X[0] + 0.5)
    U = (X - lo) / (hi - lo)
    K = kernel_matrix(U, U, theta) + eta * np.eye(X.shape[0])
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure("kernel matrix is not positive definite") from exc
    c, beta, sigma2, one_k_one = _solve_parts(L, y, K, refine=3)
    return GpModel(X.copy(), y.copy(), lo, hi, theta.copy(), float(eta), c, sigma2, beta, L, one_k_one)


def _condition_estimate(L) -> float:
    d = np.diag(L)
    return float((d.max() / d.min()) ** 2)


def _factor(p, D, n, eta_fixed):
    theta = np.exp(p[:n])
    eta = eta_fixed if eta_fixed is not None else math.exp(p[n])
    K = np.exp(-np.tensordot(theta, D, axes=1))
    try:
        L = linalg.cholesky(K + eta * np.eye(K.shape[0]), lower=True)
    except linalg.LinAlgError:
        return theta, eta, K, None
    if _condition_estimate(L) > MAX_CONDITION:
        return theta, eta, K, None
    return theta, eta, K, L


def _neg_log_likelihood(p, D, y, n, eta_fixed):
    """Concentrated negative log-likelihood and its gradient in log space."""
    theta, eta, K, L = _factor(p, D, n, eta_fixed)
    N = y.size
    if L is None:
        return _PENALTY, np.zeros_like(p)
    c, beta, sigma2, _ = _solve_parts(L, y)
    if sigma2 <= 0:
        return _PENALTY, np.zeros_like(p)
    f = 0.5 * N * math.log(sigma2) + float(np.sum(np.log(np.diag(L))))
    Kinv = linalg.cho_solve((L, True), np.eye(N))
    A = Kinv - np.outer(beta, beta) / sigma2
    grad = np.empty_like(p)
    for j in range(n):
        grad[j] = -0.5 * theta[j] * np.sum(A * D[j] * K)
    if eta_fixed is None:
        grad[n] = 0.5 * eta * np.trace(A)
    return f, grad


def _loo_error(p, D, y, n, eta_fixed):
    """Mean squared closed-form leave-one-out residual."""
    _, _, _, L = _factor(p, D, n, eta_fixed)
    N = y.size
    if L is None:
        return _PENALTY
    _, beta, _, _ = _solve_parts(L, y)
    Kinv = linalg.cho_solve((L, True), np.eye(N))
    e = beta / np.diag(Kinv)
    return float(np.mean(e**2))


def gp_train(X, y, bounds=None, objective: str = "likelihood", eta: float | None = None,
             n_restarts: int = N_RESTARTS, rng: np.random.Generator | None = None,
             theta_bounds=THETA_BOUNDS, eta_bounds=ETA_BOUNDS) -> GpModel:
    """Fit hyperparameters by multi-start L-BFGS-B and condition the GP.

    ``objective`` is ``"likelihood"`` (concentrated log-likelihood with
    analytic gradients) or ``"loo-cv"`` (closed-form leave-one-out squared
    error). ``eta=None`` optimises the nugget within ``eta_bounds``; a number
    fixes it. Starts are drawn log-uniformly from the search box.

    Fewer than ``n + 2`` points, or constant responses, leave nothing to
    fit: the GP is conditioned with ``theta = 1`` and a warning is issued.
    """
    X, y = _check_data(X, y)
    if objective not in ("likelihood", "loo-cv"):
        raise InvalidArgumentError(f"unknown objective {objective!r}")
    if n_restarts < 1:
        raise InvalidArgumentError("need at least one restart")
    N, n = X.shape
    if rng is None:
        rng = np.random.default_rng(0)
    eta_fixed = None if eta is None else float(eta)
    if eta_fixed is not None and eta_fixed < 0:
        raise InvalidArgumentError("nugget must be nonnegative")
    if N > 1 and np.unique(X, axis=0).shape[0] < N and (eta_fixed is not None and eta_fixed == 0):
        raise InvalidArgumentError("duplicate training inputs need a positive nugget")

    if N < n + 2 or np.ptp(y) == 0.0:
        warnings.warn("too few points or constant responses; hyperparameters not optimised",
                      DegenerateInputWarning)
        e = eta_fixed if eta_fixed is not None else 0.0
        if N > 1 and np.unique(X, axis=0).shape[0] < N:
            e = max(e, eta_bounds[0])
        return gp_fit(X, y, np.ones(n), e, bounds)

    lo, hi = _normalization(X, bounds)
    U = (X - lo) / (hi - lo)
    D = _sq_diffs(U)
    log_tb = np.log(theta_bounds)
    box = [tuple(log_tb)] * n
    if eta_fixed is None:
        box.append(tuple(np.log(eta_bounds)))
    box_arr = np.array(box)

    if objective == "likelihood":
        fun, jac = _neg_log_likelihood, True
    else:
        fun, jac = _loo_error, False

    best_p, best_f = None, np.inf
    for _ in range(n_restarts):
        p0 = box_arr[:, 0] + rng.random(len(box)) * (box_arr[:, 1] - box_arr[:, 0])
        try:
            res = optimize.minimize(fun, p0, args=(D, y, n, eta_fixed), jac=jac,
                                    method="L-BFGS-B", bounds=box)
        except (ValueError, FloatingPointError):
            continue
        if np.isfinite(res.fun) and res.fun < best_f:
            best_p, best_f = res.x, float(res.fun)
    if best_p is None or best_f >= _PENALTY:
        raise NumericalFailure("hyperparameter search found no positive definite kernel")

    theta = np.exp(best_p[:n])
    e = eta_fixed if eta_fixed is not None else float(np.exp(best_p[n]))
    for _ in range(8):
        try:
            model = gp_fit(X, y, theta, e, (np.column_stack([lo, hi])))
            break
        except NumericalFailure:
            e = max(e, eta_bounds[0]) * 10.0
            warnings.warn(f"kernel matrix not positive definite; nugget raised to {e:.3g}",
                          IllConditionedWarning)
    else:
        raise NumericalFailure("kernel matrix stays indefinite after nugget escalation")
    return GpModel(model.X, model.y, model.lower, model.upper, model.theta, model.eta, model.c,
                   model.sigma2, model.beta, model.chol, model.one_kinv_one, objective)


def gp_predict_many(model: GpModel, Xq):
    """Predictive means and variances at the rows of ``Xq``."""
    Uq = model.normalize(Xq)
    if Uq.shape[1] != model.n_inputs:
        raise InvalidArgumentError("query dimension does not match the model")
    if not np.all(np.isfinite(Uq)):
        raise InvalidArgumentError("query points must be finite")
    U = model.normalize(model.X)
    k = kernel_matrix(Uq, U, model.theta)
    mean = model.c + k @ model.beta
    v = linalg.solve_triangular(model.chol, k.T, lower=True)
    kk = np.sum(v**2, axis=0)
    k1 = linalg.cho_solve((model.chol, True), np.ones(U.shape[0]))
    u = 1.0 - k @ k1
    var = model.sigma2 * (1.0 - kk + u**2 / model.one_kinv_one)
    return mean, np.maximum(var, 0.0)


def gp_predict(model: GpModel, x) -> tuple[float, float]:
    """Predictive mean and variance at a single point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    mean, var = gp_predict_many(model, x)
    return float(mean[0]), float(var[0])


def _to_dict(model: GpModel) -> dict:
    return {
        "X": model.X.tolist(), "y": model.y.tolist(),
        "lower": model.lower.tolist(), "upper": model.upper.tolist(),
        "theta": model.theta.tolist(), "eta": model.eta, "objective": model.objective,
    }


def _from_dict(d: dict) -> GpModel:
    m = gp_fit(np.array(d["X"]), np.array(d["y"]), np.array(d["theta"]), float(d["eta"]),
               np.column_stack([d["lower"], d["upper"]]))
    return GpModel(m.X, m.y, m.lower, m.upper, m.theta, m.eta, m.c, m.sigma2, m.beta, m.chol,
                   m.one_kinv_one, d.get("objective", "fixed"))
