"""Synthetic inversion experiments.

An :class:`ExperimentSpec` describes the plate, the forward models, the
true hole and the settings of the five inversion strategies. The functions
here build the observation, scan the misfit landscape, run the strategies
and write a comparison report. Hole coordinates and bounds are in
millimetres throughout; everything else is SI.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from .errors import AnomalyFwiError, ConfigError
from .forward import (AnomalyParams, CallCounter, ForwardConfig, Geometry, Medium, MisfitEvaluator,
                      default_geometry, forward)
from .pso import PsoConfig, pso_optimize
from .signals import SeismogramSet, WaveletSpec, processed_misfits, write_seismograms_csv
from .surrogate import (lhs_maximin, lhs_random, mo_predict_array, mo_train, so_train,
                        surrogate_misfit_batch)
from .uhsa import SaConfig, derive_R_smin, uhsa_optimize
from .ukf import UkfConfig

STRATEGIES = ("PSO-direct", "UHSA-1", "UHSA-2", "GP-SO", "GP-MO")
STRATEGY_KEYS = {"pso": "PSO-direct", "uhsa1": "UHSA-1", "uhsa2": "UHSA-2",
                 "gp-so": "GP-SO", "gp-mo": "GP-MO"}

# Table-style presets; the experiment file may override any key
UHSA_PRESETS = {
    "uhsa1": {"T0": 9.49, "alpha": 0.95, "Nc": 100, "min_dist": 10.0, "stop_threshold": None,
              "stop_threshold_rel": 1e-3, "a": 0.8, "b": 0.2, "P0_diag": [16.0, 16.0],
              "Q_factor": 0.1, "Nk": 4, "seed": None},
    "uhsa2": {"T0": 1.44, "alpha": 0.9, "Nc": 200, "min_dist": 5.0, "stop_threshold": None,
              "stop_threshold_rel": 1e-3, "a": 0.7, "b": 0.1, "P0_diag": [4.0, 4.0],
              "Q_factor": 0.1, "Nk": 2, "seed": None},
}
PSO_DEFAULTS = {"pop": 50, "gens": 12, "w": 0.72, "c1": 1.49, "c2": 1.49, "stagnation": 15,
                "tol": 1e-12, "seed": None}
GP_DEFAULTS = {"n_doe": 128, "n_holdout": 16, "explained_variance": 0.995,
               "objective": "likelihood", "lhs_iterations": 20, "lhs_swaps": 1000, "seed": None,
               "pso": {"pop": 200, "gens": 200, "w": 0.72, "c1": 1.49, "c2": 1.49,
                       "stagnation": 15, "tol": 1e-12, "seed": None}}

_TOP_KEYS = {"name", "seed", "medium", "geometry", "forward", "observation", "inversion_model",
             "true_anomaly_mm", "radius_mm", "tau", "bounds_mm", "landscape", "strategies",
             "output_dir", "threads"}


def _merge(defaults: dict, given: dict | None, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in (given or {}).items():
        if k not in defaults:
            raise ConfigError(f"unknown key {k!r} in {where}")
        if isinstance(defaults[k], dict):
            out[k] = _merge(defaults[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    seed: int = 0
    medium: Medium = field(default_factory=Medium)
    geometry: Geometry = field(default_factory=default_geometry)
    forward: ForwardConfig = field(
        default_factory=lambda: ForwardConfig(wavelet=WaveletSpec(f_c=100e3)))
    obs_model: str = "fd2d"
    noise: float = 0.0
    peak_amplitude: float | None = 1e5
    obs_seed: int | None = None
    inversion_model: str = "analytic"
    true_anomaly: np.ndarray = field(default_factory=lambda: np.array([-10.0, 20.0]))
    radius: float = 8.0
    tau: float = 8.8e-5
    bounds: np.ndarray = field(default_factory=lambda: np.array([[-80.0, 80.0], [-40.0, 40.0]]))
    landscape: tuple = (32, 32)
    uhsa: dict = field(default_factory=lambda: copy.deepcopy(UHSA_PRESETS))
    pso: dict = field(default_factory=lambda: dict(PSO_DEFAULTS))
    gp: dict = field(default_factory=lambda: copy.deepcopy(GP_DEFAULTS))
    output_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        self.true_anomaly = np.asarray(self.true_anomaly, dtype=float).reshape(-1)
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if self.bounds.shape[0] != self.true_anomaly.size:
            raise ConfigError("bounds and true anomaly disagree on dimension")
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ConfigError("bounds need lower < upper")
        if np.any(self.true_anomaly < self.bounds[:, 0]) or np.any(self.true_anomaly > self.bounds[:, 1]):
            raise ConfigError("true anomaly lies outside the bounds")
        if not self.noise >= 0:
            raise ConfigError("noise level must be nonnegative")
        if self.peak_amplitude is not None and not self.peak_amplitude > 0:
            raise ConfigError("peak_amplitude must be positive or null")
        if self.obs_model not in ("analytic", "fd2d") or self.inversion_model not in ("analytic", "fd2d"):
            raise ConfigError("forward models are 'analytic' or 'fd2d'")
        if not (self.radius > 0 and self.tau > 0):
            raise ConfigError("radius and tau must be positive")
        if self.landscape[0] * self.landscape[1] < 4:
            raise ConfigError("landscape grid needs at least 4 points")

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ConfigError("experiment spec must be a JSON object")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        try:
            kw = {}
            for k in ("name", "seed", "tau", "output_dir", "threads", "inversion_model"):
                if k in d:
                    kw[k] = d[k]
            if "medium" in d:
                kw["medium"] = Medium(**d["medium"])
            if "geometry" in d and d["geometry"] != "default":
                g = dict(d["geometry"])
                g["source"] = tuple(g["source"])
                g["receivers"] = np.asarray(g["receivers"], dtype=float)
                g["receiver_names"] = tuple(g.get("receiver_names", ()))
                kw["geometry"] = Geometry(**g)
            fw = _merge({"f_c": 100e3, "delay": None, "duration": 1e-4, "dt": 1e-7, "h": 8e-4,
                         "dt_fd": None, "kappa": -0.5}, d.get("forward"), "forward")
            kw["forward"] = ForwardConfig(wavelet=WaveletSpec(f_c=fw["f_c"], delay=fw["delay"]),
                                          duration=fw["duration"], dt=fw["dt"], h=fw["h"],
                                          dt_fd=fw["dt_fd"], kappa=fw["kappa"])
            ob = _merge({"model": "fd2d", "noise": 0.0, "peak_amplitude": 1e5, "seed": None},
                        d.get("observation"), "observation")
            kw.update(obs_model=ob["model"], noise=float(ob["noise"]),
                      peak_amplitude=ob["peak_amplitude"], obs_seed=ob["seed"])
            if "true_anomaly_mm" in d:
                kw["true_anomaly"] = d["true_anomaly_mm"]
            if "radius_mm" in d:
                kw["radius"] = float(d["radius_mm"])
            if "bounds_mm" in d:
                kw["bounds"] = d["bounds_mm"]
            if "landscape" in d:
                ls = _merge({"nx": 32, "nz": 32}, d["landscape"], "landscape")
                kw["landscape"] = (int(ls["nx"]), int(ls["nz"]))
            st = d.get("strategies", {})
            unknown = set(st) - {"pso", "uhsa1", "uhsa2", "gp"}
            if unknown:
                raise ConfigError(f"unknown strategy blocks: {sorted(unknown)}")
            kw["uhsa"] = {k: _merge(UHSA_PRESETS[k], st.get(k), f"strategies.{k}") for k in UHSA_PRESETS}
            kw["pso"] = _merge(PSO_DEFAULTS, st.get("pso"), "strategies.pso")
            kw["gp"] = _merge(GP_DEFAULTS, st.get("gp"), "strategies.gp")
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid experiment spec: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read experiment spec {path}: {exc}") from exc
        return cls.from_dict(d)

    def with_seed(self, seed: int) -> "ExperimentSpec":
        out = copy.deepcopy(self)
        out.seed = int(seed)
        return out

    def strategy_seed(self, block: dict, offset: int) -> int:
        s = block.get("seed")
        return int(s) if s is not None else int(self.seed) + offset

    def inversion_config(self) -> ForwardConfig:
        return replace(self.forward, model=self.inversion_model)

    def observation_config(self) -> ForwardConfig:
        return replace(self.forward, model=self.obs_model)


@dataclass
class StrategyResult:
    strategy: str
    x: list | None
    misfit: float | None
    calls: int
    setup_calls: int = 0
    validation_calls: int = 0
    wall_time: float = 0.0
    status: str = "ok"
    error: str | None = None
    trace: dict = field(default_factory=dict)

    def distance_to(self, m) -> float:
        if self.x is None:
            return math.inf
        return float(np.linalg.norm(np.asarray(self.x) - np.asarray(m)))

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


@dataclass
class LandscapeGrid:
    xs: np.ndarray
    zs: np.ndarray
    S: np.ndarray  # shape (nz, nx)
    calls: int = 0

    @property
    def shape(self) -> tuple:
        return self.S.shape

    def rows(self):
        """``(x, z, S)`` triples, row-major with ``x`` varying fastest."""
        return [(float(x), float(z), float(self.S[i, j]))
                for i, z in enumerate(self.zs) for j, x in enumerate(self.xs)]

    def argmin(self) -> tuple[np.ndarray, float]:
        i, j = np.unravel_index(int(np.argmin(self.S)), self.S.shape)
        return np.array([self.xs[j], self.zs[i]]), float(self.S[i, j])

    def cell(self) -> np.ndarray:
        return np.array([self.xs[1] - self.xs[0], self.zs[1] - self.zs[0]])


# ---------------------------------------------------------------------------
# Observation and evaluation
# ---------------------------------------------------------------------------


def make_observation(spec: ExperimentSpec, counter: CallCounter | None = None) -> SeismogramSet:
    """Synthetic measurement at the true hole.

    The clean record is scaled to ``peak_amplitude`` (when set) and then
    receives white Gaussian noise with standard deviation ``noise`` times
    the clean peak amplitude.
    """
    m = AnomalyParams(spec.true_anomaly * 1e-3, spec.radius * 1e-3)
    obs = forward(m, spec.geometry, spec.medium, spec.observation_config())
    if counter is not None:
        counter.increment()
    data = obs.data
    peak = float(np.abs(data).max())
    if spec.peak_amplitude is not None and peak > 0:
        data = data * (spec.peak_amplitude / peak)
        peak = spec.peak_amplitude
    if spec.noise > 0:
        seed = spec.obs_seed if spec.obs_seed is not None else spec.seed
        rng = np.random.default_rng([int(seed), 0x0b5])
        data = data + rng.normal(0.0, spec.noise * peak, data.shape)
    return obs.with_data(data)


def make_evaluator(spec: ExperimentSpec, obs: SeismogramSet, counter: CallCounter | None = None):
    return MisfitEvaluator(obs, spec.geometry, spec.medium, spec.inversion_config(), spec.tau,
                           radius=spec.radius * 1e-3, unit=1e-3, counter=counter)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def landscape_scan(spec: ExperimentSpec, grid_nx: int | None = None, grid_nz: int | None = None,
                   obs: SeismogramSet | None = None, counter: CallCounter | None = None,
                   threads: int | None = None) -> LandscapeGrid:
    """Misfit on a regular grid spanning the bounds (endpoints included)."""
    nx, nz = grid_nx or spec.landscape[0], grid_nz or spec.landscape[1]
    if nx < 2 or nz < 2:
        raise ConfigError("landscape grid needs at least 2 points per axis")
    if obs is None:
        obs = make_observation(spec)
    local = CallCounter()
    ev = make_evaluator(spec, obs, local)
    xs = np.linspace(spec.bounds[0, 0], spec.bounds[0, 1], nx)
    zs = np.linspace(spec.bounds[1, 0], spec.bounds[1, 1], nz)
    pts = [(x, z) for z in zs for x in xs]

    def total(p):
        try:
            return ev.total(p)
        except AnomalyFwiError:
            return math.nan

    S = np.array(_map(total, pts, threads or spec.threads)).reshape(nz, nx)
    if counter is not None:
        counter.increment(local.count)
    return LandscapeGrid(xs, zs, S, local.count)


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


def _pso_config(block: dict, bounds, seed) -> PsoConfig:
    return PsoConfig(bounds, pop=int(block["pop"]), gens=int(block["gens"]), w=block["w"],
                     c1=block["c1"], c2=block["c2"], stagnation=int(block["stagnation"]),
                     tol=block["tol"], seed=seed)


def _run_pso(spec, obs, counter):
    ev = make_evaluator(spec, obs, counter)
    seed = spec.strategy_seed(spec.pso, 0)
    res = pso_optimize(_pso_config(spec.pso, spec.bounds, seed), ev.total,
                       np.random.default_rng(seed))
    trace = {"history": [float(v) for v in res.history], "generations": res.generations,
             "converged": res.converged}
    return StrategyResult("PSO-direct", res.best_x.tolist(), float(res.best_f), counter.count,
                          trace=trace)


def _run_uhsa(spec, obs, counter, key):
    block = spec.uhsa[key]
    name = "UHSA-1" if key == "uhsa1" else "UHSA-2"
    setup = CallCounter()
    s_u = make_evaluator(spec, obs, setup).vector(None)
    s_min, R = derive_R_smin(s_u, float(block["a"]), float(block["b"]))
    P0 = np.diag(np.asarray(block["P0_diag"], dtype=float))
    ukf_cfg = UkfConfig(float(block["Q_factor"]) * P0, R, s_min, int(block["Nk"]), bounds=spec.bounds)
    threshold = -math.inf
    if block["stop_threshold"] is not None:
        threshold = float(block["stop_threshold"])
    if block["stop_threshold_rel"] is not None:
        threshold = max(threshold, float(block["stop_threshold_rel"]) * float(s_u.sum()))
    sa = SaConfig(float(block["T0"]), float(block["alpha"]), int(block["Nc"]), spec.bounds, P0,
                  float(block["min_dist"]), threshold)
    ev = make_evaluator(spec, obs, counter)
    seed = spec.strategy_seed(block, 1 if key == "uhsa1" else 2)
    best_x, tr = uhsa_optimize(sa, ukf_cfg, ev, np.random.default_rng(seed))
    if tr.calls != counter.count:
        raise AnomalyFwiError(f"call accounting mismatch: {tr.calls} vs {counter.count}")
    cycles = [{"cycle": c.cycle, "proposal": c.proposal.tolist(), "status": c.status,
               "misfit": None if math.isnan(c.misfit) else c.misfit,
               "best_misfit": c.best_misfit} for c in tr.cycles]
    trace = {"n_cycles": len(tr.cycles), "n_evaluated": tr.n_evaluated, "n_accepted": tr.n_accepted,
             "stop_threshold": threshold, "cycles": cycles}
    return StrategyResult(name, None if best_x is None else best_x.tolist(),
                          float(tr.best_misfit), tr.calls, setup_calls=setup.count, trace=trace)


def _simulate(ev: MisfitEvaluator, X, threads) -> list:
    def one(x):
        ev.counter.increment()
        return ev.simulate(x)
    return _map(one, list(X), threads)


def _run_gp(spec, obs, counter, kind):
    block = spec.gp
    name = "GP-SO" if kind == "so" else "GP-MO"
    seed = spec.strategy_seed(block, 3)
    rng = np.random.default_rng(seed)
    ev = make_evaluator(spec, obs, counter)
    X = lhs_maximin(int(block["n_doe"]), spec.bounds, rng, int(block["lhs_iterations"]),
                    int(block["lhs_swaps"]))
    sims = _simulate(ev, X, spec.threads)
    val = CallCounter()
    vev = make_evaluator(spec, obs, val)
    X_hold = lhs_random(int(block["n_holdout"]), spec.bounds, rng) if block["n_holdout"] else np.empty((0, 2))
    hold = _simulate(vev, X_hold, spec.threads)
    train_rng = np.random.default_rng([seed, 1])
    trace = {"n_doe": len(sims), "n_holdout": len(hold)}
    if kind == "so":
        y = np.array([processed_misfits(obs, s, spec.tau).sum() for s in sims])
        model = so_train(X, y, obs, spec.tau, spec.bounds, objective=block["objective"], rng=train_rng)
        trace.update(theta=model.gp.theta.tolist(), eta=model.gp.eta)
    else:
        model = mo_train(X, sims, spec.bounds, float(block["explained_variance"]),
                         objective=block["objective"], rng=train_rng, threads=spec.threads)
        trace["components"] = [int(k) for k in model.components()]
        if hold:
            pred = mo_predict_array(model, X_hold)
            true = np.stack([h.data for h in hold])
            ptp = np.ptp(true, axis=2)
            nrmse = np.sqrt(np.mean((pred - true) ** 2, axis=2)) / np.where(ptp > 0, ptp, 1.0)
            trace["holdout_nrmse_median"] = float(np.median(np.median(nrmse, axis=0)))
    objective = lambda M: surrogate_misfit_batch(kind, model, M, obs, spec.tau)  # noqa: E731
    if hold:
        s_true = np.array([processed_misfits(obs, h, spec.tau).sum() for h in hold])
        s_pred = objective(X_hold)
        trace["holdout_spearman"] = float(spearmanr(s_pred, s_true)[0]) if len(hold) > 2 else None
    pblock = block["pso"]
    pseed = pblock["seed"] if pblock["seed"] is not None else seed
    res = pso_optimize(_pso_config(pblock, spec.bounds, pseed), objective,
                       np.random.default_rng([int(pseed), 2]), vectorized=True)
    trace.update(surrogate_misfit=float(res.best_f), pso_generations=res.generations,
                 pso_converged=res.converged)
    # forward check of the located point, counted with the held-out runs
    misfit = vev.total(res.best_x)
    counter_total = counter.count
    return StrategyResult(name, res.best_x.tolist(), float(misfit), counter_total,
                          validation_calls=val.count, trace=trace)


def run_strategy(name: str, spec: ExperimentSpec, obs: SeismogramSet | None = None,
                 counter: CallCounter | None = None) -> StrategyResult:
    """Run one strategy; failures are reported in the result, not raised."""
    name = STRATEGY_KEYS.get(name, name)
    if name not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; choose from {list(STRATEGY_KEYS)}")
    if obs is None:
        obs = make_observation(spec)
    local = CallCounter()
    t0 = time.perf_counter()
    try:
        if name == "PSO-direct":
            res = _run_pso(spec, obs, local)
        elif name == "UHSA-1":
            res = _run_uhsa(spec, obs, local, "uhsa1")
        elif name == "UHSA-2":
            res = _run_uhsa(spec, obs, local, "uhsa2")
        elif name == "GP-SO":
            res = _run_gp(spec, obs, local, "so")
        else:
            res = _run_gp(spec, obs, local, "mo")
    except (AnomalyFwiError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        res = StrategyResult(name, None, None, local.count, status="failed",
                             error=f"{type(exc).__name__}: {exc}")
    res.wall_time = time.perf_counter() - t0
    if counter is not None:
        counter.increment(res.calls + res.setup_calls + res.validation_calls)
    return res


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


def write_landscape_csv(path, grid: LandscapeGrid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "z", "S"])
        for x, z, s in grid.rows():
            w.writerow([repr(x), repr(z), repr(s)])


def _table(rows, true) -> str:
    lines = [f"{'strategy':<11} {'x [mm]':>9} {'z [mm]':>9} {'dist [mm]':>10} {'misfit':>12} {'calls':>6}"]
    for r in rows:
        if r.x is None:
            lines.append(f"{r.strategy:<11} {'failed':>9}")
            continue
        lines.append(f"{r.strategy:<11} {r.x[0]:9.3f} {r.x[1]:9.3f} {r.distance_to(true):10.3f} "
                     f"{r.misfit:12.5g} {r.calls:6d}")
    return "\n".join(lines) + "\n"


def bench_all(spec: ExperimentSpec, out_dir: str | None = None, strategies=STRATEGIES,
              with_landscape: bool = True) -> dict:
    """Run every strategy on one observation and write the comparison.

    Files written to ``out_dir``: ``observation.csv``, ``results.json``
    (deterministic for a given spec), ``table.txt``, ``timings.json`` and
    ``landscape.csv``.
    """
    out_dir = out_dir or spec.output_dir
    os.makedirs(out_dir, exist_ok=True)
    counter = CallCounter()
    obs = make_observation(spec, counter)
    write_seismograms_csv(os.path.join(out_dir, "observation.csv"), obs)
    rows = [run_strategy(n, spec, obs, counter) for n in strategies]
    report = {
        "name": spec.name,
        "seed": spec.seed,
        "true_anomaly_mm": spec.true_anomaly.tolist(),
        "results": [dict(r.to_json(), distance_mm=r.distance_to(spec.true_anomaly)) for r in rows],
    }
    if with_landscape:
        grid = landscape_scan(spec, obs=obs, counter=counter)
        write_landscape_csv(os.path.join(out_dir, "landscape.csv"), grid)
        xm, sm = grid.argmin()
        report["landscape"] = {"nx": int(grid.xs.size), "nz": int(grid.zs.size),
                               "argmin": xm.tolist(), "min": sm, "calls": grid.calls}
    report["total_calls"] = counter.count
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(_finite(report), fh, indent=1, sort_keys=True, allow_nan=False)
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump({r.strategy: r.wall_time for r in rows}, fh, indent=1)
    with open(os.path.join(out_dir, "table.txt"), "w") as fh:
        fh.write(_table(rows, spec.true_anomaly))
    report["rows"] = rows
    return report


def _finite(o):
    """JSON-ready copy with numpy scalars unwrapped and non-finite floats as null."""
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, np.ndarray):
        return _finite(o.tolist())
    if isinstance(o, (np.floating, float)):
        return float(o) if math.isfinite(o) else None
    if isinstance(o, np.integer):
        return int(o)
    return o
