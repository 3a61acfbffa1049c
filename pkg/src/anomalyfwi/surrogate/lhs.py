"""Latin hypercube designs."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist

from ..errors import InvalidArgumentError


def _check_bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(~np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
        raise InvalidArgumentError("bounds need finite L < U in every dimension")
    return b


def _unit_lhs(N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((N, n))
    perms = np.column_stack([rng.permutation(N) for _ in range(n)])
    return (perms + u) / N


def min_distance(U: np.ndarray) -> float:
    """Smallest pairwise Euclidean distance between the rows of ``U``."""
    if U.shape[0] < 2:
        return np.inf
    return float(pdist(U).min())


def lhs_random(N: int, bounds, rng: np.random.Generator) -> np.ndarray:
    """One random Latin hypercube sample of ``N`` points in physical units."""
    if N < 1:
        raise InvalidArgumentError("N must be positive")
    b = _check_bounds(bounds)
    U = _unit_lhs(N, b.shape[0], rng)
    return b[:, 0] + U * (b[:, 1] - b[:, 0])


def lhs_maximin(N: int, bounds, rng: np.random.Generator, iterations: int = 20,
                swaps: int = 1000) -> np.ndarray:
    """Maximin Latin hypercube design.

    The best of ``iterations`` random designs (by minimum pairwise distance
    in the unit cube) is refined by ``swaps`` random exchanges of two
    entries within one column, each kept only if it increases the minimum
    distance. Exchanges preserve the one-sample-per-bin structure. The first
    candidate is the design :func:`lhs_random` returns for the same ``rng``
    state, so the result is never worse than it.
    """
    if N < 2:
        raise InvalidArgumentError("a maximin design needs N >= 2")
    if iterations < 1 or swaps < 0:
        raise InvalidArgumentError("iterations must be positive and swaps nonnegative")
    b = _check_bounds(bounds)
    n = b.shape[0]
    best, best_d = None, -np.inf
    for _ in range(iterations):
        U = _unit_lhs(N, n, rng)
        d = min_distance(U)
        if d > best_d:
            best, best_d = U, d
    U = best.copy()
    for _ in range(swaps):
        j = rng.integers(n)
        i1, i2 = rng.choice(N, size=2, replace=False)
        U[[i1, i2], j] = U[[i2, i1], j]
        d = min_distance(U)
        if d > best_d:
            best_d = d
        else:
            U[[i1, i2], j] = U[[i2, i1], j]
    return b[:, 0] + U * (b[:, 1] - b[:, 0])


def bin_occupancy(X, bounds) -> np.ndarray:
    """Per-dimension counts of samples in each of the ``N`` equal-width bins."""
    b = _check_bounds(bounds)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    U = (X - b[:, 0]) / (b[:, 1] - b[:, 0])
    idx = np.clip(np.floor(U * N).astype(int), 0, N - 1)
    return np.stack([np.bincount(idx[:, j], minlength=N) for j in range(X.shape[1])])
