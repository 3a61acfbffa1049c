"""Principal component analysis by centred singular value decomposition."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputWarning, InvalidArgumentError


@dataclass(frozen=True)
class PcaTransform:
    """Centred PCA basis.

    ``components`` has shape ``(k, T)`` with orthonormal rows, ``variances``
    holds the sample variance along each retained component and
    ``explained`` the fraction of total variance it carries.
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray
    explained: np.ndarray
    degenerate: bool = False

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return (Y - self.mean) @ self.components.T

    def inverse(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        return scores @ self.components + self.mean


def pca_fit(Y, explained_variance_target: float = 0.995, n_components: int | None = None) -> PcaTransform:
    """Fit a PCA basis to the rows of ``Y`` (``N x T``).

    Keeps the smallest number of components whose cumulative explained
    variance reaches the target, or exactly ``n_components`` when given.
    Data without variance yields one component and ``degenerate=True``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise InvalidArgumentError("PCA needs an N x T matrix with N >= 2")
    if not np.all(np.isfinite(Y)):
        raise InvalidArgumentError("PCA input must be finite")
    if not 0.0 < explained_variance_target <= 1.0:
        raise InvalidArgumentError("explained variance target must lie in (0, 1]")
    N, T = Y.shape
    mean = Y.mean(axis=0)
    _, s, Vt = np.linalg.svd(Y - mean, full_matrices=False)
    var = s**2 / (N - 1)
    total = var.sum()
    if total <= np.finfo(float).tiny or s[0] <= 1e-12 * max(np.abs(Y).max(), 1.0) * np.sqrt(N * T):
        warnings.warn("data have no variance; keeping a single component", DegenerateInputWarning)
        return PcaTransform(mean, Vt[:1].copy(), np.zeros(1), np.zeros(1), True)
    frac = var / total
    if n_components is not None:
        if not 1 <= n_components <= Vt.shape[0]:
            raise InvalidArgumentError(f"n_components must lie in [1, {Vt.shape[0]}]")
        k = int(n_components)
    else:
        cum = np.cumsum(frac)
        k = int(np.searchsorted(cum, explained_variance_target - 1e-12) + 1)
        k = min(k, Vt.shape[0])
    return PcaTransform(mean, Vt[:k].copy(), var[:k].copy(), frac[:k].copy())
