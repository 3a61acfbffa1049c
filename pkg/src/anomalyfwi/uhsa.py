"""Simulated annealing with unscented-Kalman-filter refinement (UHSA).

Each cycle draws a uniform random configuration, evaluates its misfit and
accepts it with a Metropolis-type probability scaled by the average
accepted misfit increase. Accepted configurations seed a short UKF run that
exploits the surrounding basin. Temperatures follow ``T_c = alpha**c T_0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .ukf import GaussianState, UkfConfig, ukf_run


def propose_uniform(bounds, rng: np.random.Generator) -> np.ndarray:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    u = rng.random(b.shape[0])
    return b[:, 0] + u * (b[:, 1] - b[:, 0])


def acceptance_probability(dS: float, dS_bar: float, T: float) -> float:
    """``min(1, exp(-dS / (dS_bar T)))``; improvements are always accepted."""
    if not dS_bar > 0:
        raise InvalidArgumentError(f"average accepted increase must be positive, got {dS_bar}")
    if not T > 0:
        raise InvalidArgumentError(f"temperature must be positive, got {T}")
    if dS <= 0:
        return 1.0
    return math.exp(-dS / (dS_bar * T))


def cool(T: float, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"cooling factor must lie in (0, 1), got {alpha}")
    if not T > 0:
        raise InvalidArgumentError("temperature must be positive")
    return alpha * T


def temperature_for_acceptance(p_target: float) -> float:
    """Initial temperature at which a move of average size is accepted with ``p_target``."""
    if not 0.0 < p_target < 1.0:
        raise InvalidArgumentError("target acceptance probability must lie in (0, 1)")
    return -1.0 / math.log(p_target)


def derive_R_smin(s_u, a: float, b: float):
    """``s_min = a s_u`` and ``R = diag(b s_u)`` from the undisturbed-plate misfits."""
    s_u = np.asarray(s_u, dtype=float).reshape(-1)
    if np.any(~np.isfinite(s_u)) or np.any(s_u <= 0):
        raise InvalidArgumentError("undisturbed misfits must be positive")
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise InvalidArgumentError("tuning fractions a and b must lie in [0, 1]")
    return a * s_u, np.diag(b * s_u)


@dataclass
class SaConfig:
    T0: float
    alpha: float
    n_cycles: int
    bounds: np.ndarray
    p0: np.ndarray
    min_dist: float = 0.0
    stop_threshold: float = -math.inf

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        self.p0 = np.atleast_2d(np.asarray(self.p0, dtype=float))
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.n_cycles < 1:
            raise InvalidArgumentError("at least one cycle is required")
        if self.min_dist < 0:
            raise InvalidArgumentError("min_dist must be nonnegative")
        if not self.T0 > 0:
            raise InvalidArgumentError("T0 must be positive")
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise InvalidArgumentError("bounds need L < U")

    def temperature(self, c: int) -> float:
        return self.T0 * self.alpha**c


@dataclass
class CycleRecord:
    cycle: int
    proposal: np.ndarray
    temperature: float
    status: str  # "accepted", "rejected", "too_close", "failed"
    misfit: float = math.nan
    dS: float = math.nan
    dS_bar: float = math.nan
    probability: float = math.nan
    ukf: object = None
    best_misfit: float = math.inf


@dataclass
class UhsaTrace:
    cycles: list = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_misfit: float = math.inf
    calls: int = 0

    @property
    def n_evaluated(self) -> int:
        return sum(1 for c in self.cycles if c.status in ("accepted", "rejected"))

    @property
    def n_accepted(self) -> int:
        return sum(1 for c in self.cycles if c.status == "accepted")


def uhsa_optimize(cfg: SaConfig, ukf_cfg: UkfConfig, evaluate, rng: np.random.Generator):
    """Run up to ``cfg.n_cycles`` annealing cycles.

    ``evaluate(x)`` returns ``(misfit_vector, total)``. Proposals closer than
    ``cfg.min_dist`` to an earlier evaluated proposal are skipped without
    evaluation but still consume the cycle. The loop ends early once the
    running best misfit drops below ``cfg.stop_threshold``.

    Returns ``(best_x, trace)``.
    """
    if ukf_cfg.bounds is None:
        ukf_cfg = UkfConfig(ukf_cfg.Q, ukf_cfg.R, ukf_cfg.s_min, ukf_cfg.n_iter, ukf_cfg.lam, cfg.bounds)
    trace = UhsaTrace()
    evaluated = []
    accepted_increases = []
    dS_bar = None

    def vector(x):
        trace.calls += 1
        return evaluate(x)[0]

    for c in range(cfg.n_cycles):
        T = cfg.temperature(c)
        x = propose_uniform(cfg.bounds, rng)
        u = rng.random()
        rec = CycleRecord(c, x, T, "rejected")
        trace.cycles.append(rec)
        out_of_bounds = np.any(x < cfg.bounds[:, 0]) or np.any(x > cfg.bounds[:, 1])
        if out_of_bounds or any(np.linalg.norm(x - p) < cfg.min_dist for p in evaluated):
            rec.status = "too_close"
            rec.best_misfit = trace.best_misfit
            continue
        try:
            trace.calls += 1
            mv, S = evaluate(x)
        except Exception as exc:  # noqa: BLE001 - any forward failure skips the cycle
            rec.status = "failed"
            rec.ukf = repr(exc)
            rec.best_misfit = trace.best_misfit
            continue
        evaluated.append(x)
        rec.misfit = S
        if trace.best_x is None:
            dS = 0.0
        else:
            dS = S - trace.best_misfit
            if dS_bar is None and dS != 0.0:
                dS_bar = abs(dS)
        rec.dS = dS
        if S < trace.best_misfit:
            trace.best_x, trace.best_misfit = x.copy(), S
        P = 1.0 if dS <= 0 or dS_bar is None else acceptance_probability(dS, dS_bar, T)
        rec.probability = P
        rec.dS_bar = math.nan if dS_bar is None else dS_bar
        if u < P:
            rec.status = "accepted"
            if dS > 0:
                accepted_increases.append(dS)
                dS_bar = float(np.mean(accepted_increases))
            try:
                run = ukf_run(GaussianState(x, cfg.p0), ukf_cfg, vector, start_misfits=mv)
            except Exception as exc:  # noqa: BLE001
                rec.ukf = repr(exc)
            else:
                rec.ukf = run
                if run.best_total < trace.best_misfit:
                    trace.best_x, trace.best_misfit = np.array(run.best_mean), run.best_total
        rec.best_misfit = trace.best_misfit
        if trace.best_misfit < cfg.stop_threshold:
            break
    return trace.best_x, trace
