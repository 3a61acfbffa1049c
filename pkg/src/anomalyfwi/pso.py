"""Global-best particle swarm optimisation on a box."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class PsoConfig:
    bounds: np.ndarray
    pop: int = 50
    gens: int = 12
    w: float = 0.72
    c1: float = 1.49
    c2: float = 1.49
    stagnation: int = 15
    tol: float = 1e-12
    seed: int | None = None

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if self.pop < 2:
            raise InvalidArgumentError("population must hold at least 2 particles")
        if self.gens < 0:
            raise InvalidArgumentError("generation count must be nonnegative")
        if self.stagnation < 1:
            raise InvalidArgumentError("stagnation window must be at least 1")
        if not (0.0 <= self.w <= 1.0) or self.c1 <= 0 or self.c2 <= 0:
            raise InvalidArgumentError("need w in [0, 1] and positive c1, c2")
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise InvalidArgumentError("bounds need L < U")


@dataclass
class Swarm:
    x: np.ndarray
    v: np.ndarray
    pbest_x: np.ndarray
    pbest_f: np.ndarray
    gbest_x: np.ndarray
    gbest_f: float
    generation: int = 0


@dataclass
class PsoResult:
    best_x: np.ndarray
    best_f: float
    history: list = field(default_factory=list)
    n_evals: int = 0
    generations: int = 0
    converged: bool = False


def _evaluate_population(objective, X, rng, lo, hi, vectorized, threads):
    """Objective values for every row of ``X`` (rows may be re-sampled on failure)."""
    if vectorized:
        try:
            f = np.asarray(objective(X), dtype=float).reshape(-1)
            if f.size == X.shape[0]:
                return X, f, X.shape[0]
        except Exception:  # noqa: BLE001 - fall back to one particle at a time
            pass

    def single(i):
        x = X[i]
        try:
            return x, float(objective(x[None, :])[0] if vectorized else objective(x)), 1
        except Exception:  # noqa: BLE001
            pass
        # one retry at a fresh uniform position
        x = lo + rng_draws[i] * (hi - lo)
        try:
            return x, float(objective(x[None, :])[0] if vectorized else objective(x)), 2
        except Exception:  # noqa: BLE001
            return x, math.inf, 2

    rng_draws = rng.random(X.shape)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(single, range(X.shape[0])))
    else:
        out = [single(i) for i in range(X.shape[0])]
    Xn = np.vstack([o[0] for o in out])
    f = np.array([o[1] for o in out])
    return Xn, f, sum(o[2] for o in out)


def pso_optimize(cfg: PsoConfig, objective, rng: np.random.Generator | None = None,
                 vectorized: bool = False, threads: int = 1) -> PsoResult:
    """Minimise ``objective`` over ``cfg.bounds``.

    The initial population is evaluated, then up to ``cfg.gens`` velocity and
    position updates follow. The run stops early when the global best has
    improved by no more than ``tol * |gbest|`` over the last ``stagnation``
    generations. With ``vectorized=True`` the objective receives the whole
    ``(pop, n)`` population and returns ``pop`` values.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    n = lo.size
    span = hi - lo
    x = lo + rng.random((cfg.pop, n)) * span
    v = (rng.random((cfg.pop, n)) * 2.0 - 1.0) * 0.1 * span
    x, f, n_evals = _evaluate_population(objective, x, rng, lo, hi, vectorized, threads)
    g = int(np.argmin(f))
    swarm = Swarm(x, v, x.copy(), f.copy(), x[g].copy(), float(f[g]))
    history = [swarm.gbest_f]
    converged = False
    for gen in range(1, cfg.gens + 1):
        r1 = rng.random((cfg.pop, n))
        r2 = rng.random((cfg.pop, n))
        swarm.v = (cfg.w * swarm.v + cfg.c1 * r1 * (swarm.pbest_x - swarm.x)
                   + cfg.c2 * r2 * (swarm.gbest_x - swarm.x))
        x_new = swarm.x + swarm.v
        clipped = (x_new < lo) | (x_new > hi)
        swarm.x = np.clip(x_new, lo, hi)
        swarm.v[clipped] = 0.0
        swarm.x, f, k = _evaluate_population(objective, swarm.x, rng, lo, hi, vectorized, threads)
        n_evals += k
        better = f < swarm.pbest_f
        swarm.pbest_x[better] = swarm.x[better]
        swarm.pbest_f[better] = f[better]
        g = int(np.argmin(swarm.pbest_f))
        if swarm.pbest_f[g] < swarm.gbest_f:
            swarm.gbest_f = float(swarm.pbest_f[g])
            swarm.gbest_x = swarm.pbest_x[g].copy()
        swarm.generation = gen
        history.append(swarm.gbest_f)
        if gen >= cfg.stagnation:
            past = history[gen - cfg.stagnation]
            if past - swarm.gbest_f <= cfg.tol * abs(swarm.gbest_f):
                converged = True
                break
    return PsoResult(swarm.gbest_x, swarm.gbest_f, history, n_evals, swarm.generation, converged)
