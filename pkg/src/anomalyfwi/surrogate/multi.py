"""Surrogate misfit models.

The single-output model regresses the scalar misfit against one fixed
observation. The multi-output model predicts every receiver trace from
PCA scores, each score regressed by its own GP, so one trained model
serves any observation.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ExtrapolationWarning, InvalidArgumentError, StaleModelError
from ..signals import SeismogramSet, processed_misfits_array, read_seismograms_csv
from .gp import GpModel, _from_dict, _to_dict, gp_predict_many, gp_train
from .pca import PcaTransform, pca_fit

FORMAT_VERSION = 1
_CHUNK = 256  # query rows per batch of predicted traces


def observation_fingerprint(obs: SeismogramSet) -> str:
    """Hash of the grid, receiver names and samples of an observation."""
    h = hashlib.sha256()
    h.update(repr((obs.t0, obs.dt, tuple(obs.receivers))).encode())
    h.update(np.ascontiguousarray(obs.data, dtype=np.float64).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class SingleOutputModel:
    gp: GpModel
    fingerprint: str
    tau: float


@dataclass(frozen=True)
class MultiOutputModel:
    receivers: tuple
    t0: float
    dt: float
    n_samples: int
    bounds: np.ndarray
    pcas: tuple  # one PcaTransform per receiver
    gps: tuple  # per receiver, one GpModel per retained component

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def components(self) -> list:
        return [p.k for p in self.pcas]


def _check_inputs(X, bounds):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if b.shape[0] != X.shape[1]:
        raise InvalidArgumentError("bounds and inputs disagree on dimension")
    if np.unique(X, axis=0).shape[0] != X.shape[0]:
        raise InvalidArgumentError("DoE inputs must be distinct")
    return X, b


def so_train(X, misfits, obs: SeismogramSet, tau: float, bounds, objective: str = "likelihood",
             eta: float | None = None, rng: np.random.Generator | None = None) -> SingleOutputModel:
    """Train a scalar misfit surrogate tied to ``obs``."""
    X, b = _check_inputs(X, bounds)
    gp = gp_train(X, misfits, b, objective=objective, eta=eta, rng=rng)
    return SingleOutputModel(gp, observation_fingerprint(obs), float(tau))


def _stack_signals(signals):
    if isinstance(signals, np.ndarray):
        raise InvalidArgumentError("pass a sequence of SeismogramSet, or use signals_from_array")
    signals = list(signals)
    if not signals:
        raise InvalidArgumentError("no training signals")
    first = signals[0]
    for s in signals[1:]:
        if (s.receivers != first.receivers or s.n_samples != first.n_samples
                or not np.isclose(s.t0, first.t0) or not np.isclose(s.dt, first.dt)):
            raise InvalidArgumentError("training signals must share receivers and time grid")
    return first, np.stack([s.data for s in signals])


def mo_train(X, signals, bounds, explained_variance_target: float = 0.995,
             objective: str = "likelihood", eta: float | None = None,
             rng: np.random.Generator | None = None, threads: int = 1) -> MultiOutputModel:
    """Train one PCA and a GP per retained component for every receiver.

    ``signals`` is a sequence of ``SeismogramSet`` (one per row of ``X``)
    on a common grid. Each GP gets its own generator spawned from ``rng``
    so results do not depend on ``threads``.
    """
    X, b = _check_inputs(X, bounds)
    first, Y = _stack_signals(signals)
    if Y.shape[0] != X.shape[0]:
        raise InvalidArgumentError(f"{X.shape[0]} inputs but {Y.shape[0]} signal sets")
    if rng is None:
        rng = np.random.default_rng(0)
    r = Y.shape[1]
    pcas = [pca_fit(Y[:, j, :], explained_variance_target) for j in range(r)]
    jobs = [(j, c) for j in range(r) for c in range(pcas[j].k)]
    seeds = rng.spawn(len(jobs))

    def fit(i):
        j, c = jobs[i]
        scores = pcas[j].transform(Y[:, j, :])[:, c]
        return gp_train(X, scores, b, objective=objective, eta=eta, rng=seeds[i])

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(fit, range(len(jobs))))
    else:
        fitted = [fit(i) for i in range(len(jobs))]
    gps, pos = [], 0
    for j in range(r):
        gps.append(tuple(fitted[pos : pos + pcas[j].k]))
        pos += pcas[j].k
    return MultiOutputModel(tuple(first.receivers), first.t0, first.dt, first.n_samples, b,
                            tuple(pcas), tuple(gps))


def _warn_extrapolation(bounds, M):
    if np.any(M < bounds[:, 0]) or np.any(M > bounds[:, 1]):
        warnings.warn("query outside the training bounds", ExtrapolationWarning)


def mo_predict_array(model: MultiOutputModel, M) -> np.ndarray:
    """Predicted traces for each row of ``M``, shape ``(B, r, T)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != model.bounds.shape[0]:
        raise InvalidArgumentError("query dimension does not match the model")
    _warn_extrapolation(model.bounds, M)
    out = np.empty((M.shape[0], model.n_receivers, model.n_samples))
    for j, (pca, gps) in enumerate(zip(model.pcas, model.gps)):
        scores = np.column_stack([gp_predict_many(g, M)[0] for g in gps])
        out[:, j, :] = pca.inverse(scores)
    return out


def mo_predict_signals(model: MultiOutputModel, m) -> SeismogramSet:
    """Predicted receiver traces at one parameter point."""
    data = mo_predict_array(model, np.asarray(m, dtype=float).reshape(1, -1))[0]
    return SeismogramSet(model.receivers, model.t0, model.dt, data)


def surrogate_misfit_batch(kind: str, model, M, obs: SeismogramSet, tau: float) -> np.ndarray:
    """Surrogate misfit totals at the rows of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if kind in ("single-output", "so"):
        if not isinstance(model, SingleOutputModel):
            raise InvalidArgumentError("single-output prediction needs a SingleOutputModel")
        if observation_fingerprint(obs) != model.fingerprint or not np.isclose(tau, model.tau):
            raise StaleModelError("single-output model was trained against a different observation")
        _warn_extrapolation(np.column_stack([model.gp.lower, model.gp.upper]), M)
        return gp_predict_many(model.gp, M)[0]
    if kind in ("multi-output", "mo"):
        if not isinstance(model, MultiOutputModel):
            raise InvalidArgumentError("multi-output prediction needs a MultiOutputModel")
        if tuple(obs.receivers) != model.receivers:
            raise InvalidArgumentError("observation receivers do not match the model")
        out = np.empty(M.shape[0])
        for i in range(0, M.shape[0], _CHUNK):
            sims = mo_predict_array(model, M[i : i + _CHUNK])
            out[i : i + _CHUNK] = processed_misfits_array(obs, sims, model.t0, model.dt, tau).sum(axis=-1)
        return out
    raise InvalidArgumentError(f"unknown surrogate kind {kind!r}")


def surrogate_misfit(kind: str, model, m, obs: SeismogramSet, tau: float) -> float:
    """Surrogate misfit at one point; ``kind`` is ``single-output`` or ``multi-output``."""
    return float(surrogate_misfit_batch(kind, model, np.asarray(m, dtype=float).reshape(1, -1), obs, tau)[0])


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _pca_to_dict(p: PcaTransform) -> dict:
    return {"mean": p.mean.tolist(), "components": p.components.tolist(),
            "variances": p.variances.tolist(), "explained": p.explained.tolist(),
            "degenerate": p.degenerate}


def _pca_from_dict(d: dict) -> PcaTransform:
    return PcaTransform(np.array(d["mean"]), np.array(d["components"]).reshape(-1, len(d["mean"])),
                        np.array(d["variances"]), np.array(d["explained"]), bool(d["degenerate"]))


def model_to_dict(model) -> dict:
    if isinstance(model, SingleOutputModel):
        return {"format": FORMAT_VERSION, "kind": "single-output", "gp": _to_dict(model.gp),
                "fingerprint": model.fingerprint, "tau": model.tau}
    if isinstance(model, MultiOutputModel):
        return {"format": FORMAT_VERSION, "kind": "multi-output",
                "receivers": list(model.receivers), "t0": model.t0, "dt": model.dt,
                "n_samples": model.n_samples, "bounds": model.bounds.tolist(),
                "pcas": [_pca_to_dict(p) for p in model.pcas],
                "gps": [[_to_dict(g) for g in gs] for gs in model.gps]}
    if isinstance(model, GpModel):
        return {"format": FORMAT_VERSION, "kind": "gp", "gp": _to_dict(model)}
    raise InvalidArgumentError(f"cannot serialise {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("format") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format {d.get('format')!r}")
    kind = d.get("kind")
    if kind == "gp":
        return _from_dict(d["gp"])
    if kind == "single-output":
        return SingleOutputModel(_from_dict(d["gp"]), d["fingerprint"], float(d["tau"]))
    if kind == "multi-output":
        return MultiOutputModel(tuple(d["receivers"]), float(d["t0"]), float(d["dt"]),
                                int(d["n_samples"]), np.array(d["bounds"], dtype=float),
                                tuple(_pca_from_dict(p) for p in d["pcas"]),
                                tuple(tuple(_from_dict(g) for g in gs) for gs in d["gps"]))
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a JSON model file") from exc
    return model_from_dict(d)


# ---------------------------------------------------------------------------
# DoE ingestion
# ---------------------------------------------------------------------------


def read_doe_csv(path):
    """Read an externally computed DoE index.

    Columns are the input coordinates followed by either ``misfit`` (a
    single-output DoE) or ``file`` (path to a seismogram CSV, relative to
    the index). Returns ``(X, y)`` or ``(X, [SeismogramSet, ...])``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: empty DoE table")
    header = [h.strip() for h in rows[0]]
    last = header[-1]
    if last not in ("misfit", "file"):
        raise ConfigError(f"{path}: last column must be 'misfit' or 'file'")
    try:
        X = np.array([[float(v) for v in row[:-1]] for row in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric input coordinate") from exc
    if last == "misfit":
        return X, np.array([float(row[-1]) for row in rows[1:]])
    base = os.path.dirname(os.path.abspath(path))
    sets = [read_seismograms_csv(os.path.join(base, row[-1].strip())) for row in rows[1:]]
    return X, sets
