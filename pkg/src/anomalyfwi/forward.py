"""Forward models for a plate with a circular hole.

Two stand-ins for a full elastic solver are provided: a ray-style analytic
model (direct arrival plus one scattered arrival off the hole) and a 2D
acoustic finite-difference solver with pressure-free outer boundaries.
All lengths are in metres and times in seconds.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, StabilityError
from .signals import (
    SeismogramSet,
    WaveletSpec,
    _resample_rows,
    default_receiver_names,
    processed_misfits,
)

EPS_DISTANCE = 1e-6
FMAX_FACTOR = 2.5
POINTS_PER_WAVELENGTH = 5


@dataclass(frozen=True)
class Medium:
    v_p: float = 6340.0
    v_s: float = 3110.0
    rho: float = 2775.0

    def __post_init__(self):
        if not (self.v_p > self.v_s > 0):
            raise InvalidArgumentError("velocities must satisfy v_p > v_s > 0")
        if not self.rho > 0:
            raise InvalidArgumentError("density must be positive")


@dataclass(frozen=True)
class Geometry:
    """Rectangular 2D domain with one source and a line of receivers."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    source: tuple
    receivers: np.ndarray
    receiver_names: tuple = ()

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise InvalidArgumentError("domain bounds must be increasing")
        rec = np.array(self.receivers, dtype=float).reshape(-1, 2)
        if rec.shape[0] < 1:
            raise InvalidArgumentError("at least one receiver is required")
        rec.setflags(write=False)
        object.__setattr__(self, "receivers", rec)
        object.__setattr__(self, "source", (float(self.source[0]), float(self.source[1])))
        for p in [self.source, *rec]:
            if not self.contains(p):
                raise InvalidArgumentError(f"point {tuple(p)} lies outside the domain")
        names = tuple(self.receiver_names) or default_receiver_names(rec.shape[0])
        if len(names) != rec.shape[0]:
            raise InvalidArgumentError("receiver_names length must match receivers")
        object.__setattr__(self, "receiver_names", names)

    def contains(self, p) -> bool:
        tol = 1e-12
        return (self.x_min - tol <= p[0] <= self.x_max + tol) and (
            self.z_min - tol <= p[1] <= self.z_max + tol
        )

    @property
    def n_receivers(self) -> int:
        return self.receivers.shape[0]

    def swapped(self, j: int) -> "Geometry":
        """Geometry with the source and receiver ``j`` exchanged."""
        rec = self.receivers.copy()
        src = tuple(rec[j])
        rec[j] = self.source
        return replace(self, source=src, receivers=rec)


def default_geometry() -> Geometry:
    """200.4 mm x 100 mm plate, source mid short edge, 30 receivers on the top edge.

    Receivers sit at 5 mm spacing from x = -50 mm to x = 95 mm, which keeps
    the source-receiver angle to the source normal at or below about 45 deg.
    """
    rec_x = -0.050 + 0.005 * np.arange(30)
    receivers = np.column_stack([rec_x, np.full(30, 0.050)])
    return Geometry(-0.1002, 0.1002, -0.050, 0.050, (-0.1002, 0.0), receivers)


@dataclass(frozen=True)
class AnomalyParams:
    """Hole centre ``m`` (metres), fixed radius and rectangular bounds on ``m``."""

    m: np.ndarray
    radius: float = 0.008
    bounds: np.ndarray | None = None

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(-1)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        if not self.radius > 0:
            raise InvalidArgumentError("hole radius must be positive")
        if self.bounds is not None:
            b = np.array(self.bounds, dtype=float).reshape(-1, 2)
            if b.shape[0] != m.size or np.any(b[:, 0] >= b[:, 1]):
                raise InvalidArgumentError("bounds need L_i < U_i for every component")
            b.setflags(write=False)
            object.__setattr__(self, "bounds", b)

    def within_bounds(self) -> bool:
        if self.bounds is None:
            return True
        return bool(np.all(self.m >= self.bounds[:, 0]) and np.all(self.m <= self.bounds[:, 1]))


@dataclass(frozen=True)
class ForwardConfig:
    """Forward model selection and discretisation.

    ``dt`` is the output sampling interval; ``h`` and ``dt_fd`` drive the
    finite-difference solver (``dt_fd=None`` picks 90 % of the CFL limit).
    ``kappa`` weights the scattered arrival of the analytic model.
    """

    model: str = "analytic"
    wavelet: WaveletSpec = field(default_factory=WaveletSpec)
    duration: float = 1e-4
    dt: float = 1e-7
    h: float = 8e-4
    dt_fd: float | None = None
    kappa: float = -0.5

    def __post_init__(self):
        if self.model not in ("analytic", "fd2d"):
            raise InvalidArgumentError(f"unknown forward model {self.model!r}")
        if not (self.duration > 0 and self.dt > 0 and self.h > 0):
            raise InvalidArgumentError("duration, dt and h must be positive")
        if self.dt_fd is not None and not self.dt_fd > 0:
            raise InvalidArgumentError("dt_fd must be positive")

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9)) + 1

    def fd_time_step(self, med: Medium) -> float:
        if self.dt_fd is not None:
            return self.dt_fd
        return 0.9 * cfl_bound(self.h, med.v_p)


def cfl_bound(h: float, v_p: float) -> float:
    return h / (v_p * math.sqrt(2.0))


@dataclass(frozen=True)
class StabilityReport:
    f_max: float
    element_edge_bound: float
    spacing_bound: float
    cfl_bound: float
    h: float
    dt_fd: float
    rules: dict

    @property
    def passed(self) -> bool:
        return all(self.rules.values())

    @property
    def violations(self) -> list:
        return [name for name, ok in self.rules.items() if not ok]


def stability_check(med: Medium, cfg: ForwardConfig) -> StabilityReport:
    """Check the points-per-wavelength and CFL rules for the FD grid.

    ``element_edge_bound`` is ``v_s / f_max`` (an element edge carrying five
    nodes); the finite-difference spacing itself must stay below
    ``v_s / (5 f_max)`` and the time step below ``h / (v_p sqrt 2)``.
    """
    f_max = FMAX_FACTOR * cfg.wavelet.f_c
    element = med.v_s / f_max
    spacing = element / POINTS_PER_WAVELENGTH
    cfl = cfl_bound(cfg.h, med.v_p)
    dt_fd = cfg.fd_time_step(med)
    rules = {"wavelength": cfg.h <= spacing, "cfl": dt_fd <= cfl}
    return StabilityReport(f_max, element, spacing, cfl, cfg.h, dt_fd, rules)


def _hole_center(m) -> tuple[np.ndarray | None, float]:
    if m is None:
        return None, 0.0
    if isinstance(m, AnomalyParams):
        return np.asarray(m.m, dtype=float), m.radius
    raise InvalidArgumentError("m must be AnomalyParams or None")


def _check_clearance(center, radius, geo: Geometry):
    pts = np.vstack([np.asarray(geo.source)[None, :], geo.receivers])
    d = np.hypot(*(pts - center).T)
    if np.any(d <= radius):
        raise DegenerateInputError("the hole overlaps the source or a receiver")


def analytic_forward(m, geo: Geometry, med: Medium, cfg: ForwardConfig) -> SeismogramSet:
    """Direct arrival plus a single scattered arrival off the hole.

    Each trace is ``w(t - r_d/v_p) / r_d`` plus
    ``kappa w(t - (r_1 + r_2 - 2a)/v_p) / sqrt(r_1 r_2)`` with ``r_1`` the
    source-hole and ``r_2`` the hole-receiver distance. ``m=None`` gives the
    undisturbed plate.
    """
    center, radius = _hole_center(m)
    t = np.arange(cfg.n_samples) * cfg.dt
    src = np.asarray(geo.source)
    rec = geo.receivers
    r_d = np.hypot(*(rec - src).T)
    w = cfg.wavelet
    data = w(t[None, :] - (r_d / med.v_p)[:, None]) / np.maximum(r_d, EPS_DISTANCE)[:, None]
    if center is not None and cfg.kappa != 0.0:
        _check_clearance(center, radius, geo)
        r1 = math.hypot(*(center - src))
        r2 = np.hypot(*(rec - center).T)
        delay = (r1 + r2 - 2.0 * radius) / med.v_p
        amp = cfg.kappa / np.maximum(np.sqrt(r1 * r2), EPS_DISTANCE)
        data = data + amp[:, None] * w(t[None, :] - delay[:, None])
    return SeismogramSet(geo.receiver_names, 0.0, cfg.dt, data)


def _grid_index(value, lo, step, n):
    i = int(round((value - lo) / step))
    # boundary nodes are pressure-free, so sources and receivers sit one node inside
    return min(max(i, 1), n - 2)


@dataclass
class _FdGrid:
    nx: int
    nz: int
    hx: float
    hz: float
    dt: float
    nt: int
    mask: np.ndarray
    source: tuple
    src_amp: np.ndarray


def _fd_grid(m, geo: Geometry, med: Medium, cfg: ForwardConfig) -> _FdGrid:
    report = stability_check(med, cfg)
    for rule in report.violations:
        if rule == "wavelength":
            raise StabilityError(
                rule,
                f"grid spacing {cfg.h:.4g} m exceeds v_s/(5 f_max) = {report.spacing_bound:.4g} m",
            )
        raise StabilityError(
            rule, f"time step {report.dt_fd:.4g} s exceeds CFL bound {report.cfl_bound:.4g} s"
        )
    center, radius = _hole_center(m)
    lx, lz = geo.x_max - geo.x_min, geo.z_max - geo.z_min
    nx = int(math.ceil(lx / cfg.h - 1e-9)) + 1
    nz = int(math.ceil(lz / cfg.h - 1e-9)) + 1
    hx, hz = lx / (nx - 1), lz / (nz - 1)
    mask = np.zeros((nx, nz))
    mask[1:-1, 1:-1] = 1.0
    if center is not None:
        _check_clearance(center, radius, geo)
        xs = geo.x_min + hx * np.arange(nx)
        zs = geo.z_min + hz * np.arange(nz)
        mask[np.hypot(xs[:, None] - center[0], zs[None, :] - center[1]) <= radius] = 0.0
    dt = report.dt_fd
    nt = int(math.ceil(cfg.duration / dt)) + 2
    src = (_grid_index(geo.source[0], geo.x_min, hx, nx), _grid_index(geo.source[1], geo.z_min, hz, nz))
    src_amp = cfg.wavelet(dt * np.arange(nt)) * (med.v_p * dt) ** 2 / (hx * hz)
    return _FdGrid(nx, nz, hx, hz, dt, nt, mask, src, src_amp)


def _fd_steps(grid: _FdGrid, v_p: float):
    """Yield the pressure field at times ``n * dt`` for ``n = 0 .. nt-1``."""
    cx2 = (v_p * grid.dt / grid.hx) ** 2
    cz2 = (v_p * grid.dt / grid.hz) ** 2
    p_prev = np.zeros((grid.nx, grid.nz))
    p = np.zeros((grid.nx, grid.nz))
    lap = np.zeros((grid.nx, grid.nz))
    si, sk = grid.source
    for n in range(grid.nt):
        yield p
        c = p[1:-1, 1:-1]
        lap[1:-1, 1:-1] = cx2 * (p[2:, 1:-1] - 2.0 * c + p[:-2, 1:-1]) + cz2 * (
            p[1:-1, 2:] - 2.0 * c + p[1:-1, :-2]
        )
        p_next = 2.0 * p - p_prev + lap
        p_next[si, sk] += grid.src_amp[n]
        p_next *= grid.mask
        p_prev, p = p, p_next


def fd2d_forward(m, geo: Geometry, med: Medium, cfg: ForwardConfig) -> SeismogramSet:
    """Second-order leapfrog solution of the 2D acoustic wave equation.

    All outer boundaries and every node inside the hole are held at zero
    pressure. The wavelet is injected at the source node and the pressure is
    recorded at the receiver nodes every time step, then resampled to the
    output grid of ``cfg``.
    """
    grid = _fd_grid(m, geo, med, cfg)
    ri = np.array([_grid_index(x, geo.x_min, grid.hx, grid.nx) for x in geo.receivers[:, 0]])
    rk = np.array([_grid_index(z, geo.z_min, grid.hz, grid.nz) for z in geo.receivers[:, 1]])
    rec = np.empty((geo.n_receivers, grid.nt))
    for n, p in enumerate(_fd_steps(grid, med.v_p)):
        rec[:, n] = p[ri, rk]
    data = _resample_rows(rec, 0.0, grid.dt, 0.0, cfg.dt, cfg.n_samples)
    return SeismogramSet(geo.receiver_names, 0.0, cfg.dt, data)


def fd2d_field_peak(m, geo: Geometry, med: Medium, cfg: ForwardConfig) -> float:
    """Largest absolute pressure anywhere on the grid during the run."""
    grid = _fd_grid(m, geo, med, cfg)
    return max(float(np.abs(p).max()) for p in _fd_steps(grid, med.v_p))


def forward(m, geo: Geometry, med: Medium, cfg: ForwardConfig) -> SeismogramSet:
    if cfg.model == "analytic":
        return analytic_forward(m, geo, med, cfg)
    return fd2d_forward(m, geo, med, cfg)


class CallCounter:
    """Thread-safe forward-run counter."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self, k: int = 1) -> int:
        with self._lock:
            self._count += k
            return self._count

    @property
    def count(self) -> int:
        return self._count


class MisfitEvaluator:
    """Misfit of a hole position against a fixed observation.

    Calling the evaluator with coordinates ``x`` (in units of ``unit``
    metres, millimetres by default) runs the configured forward model with
    the hole centred at ``x * unit`` and returns ``(misfit_vector, S)``.
    Every call counts as one forward run.
    """

    def __init__(self, obs: SeismogramSet, geo: Geometry, med: Medium, cfg: ForwardConfig,
                 tau: float, radius: float = 0.008, unit: float = 1e-3, counter=None):
        if obs.n_receivers != geo.n_receivers:
            raise InvalidArgumentError("observation and geometry disagree on receiver count")
        self.obs = obs
        self.geo = geo
        self.med = med
        self.cfg = cfg
        self.tau = tau
        self.radius = radius
        self.unit = unit
        self.counter = counter if counter is not None else CallCounter()

    @property
    def calls(self) -> int:
        return self.counter.count

    def simulate(self, x) -> SeismogramSet:
        params = None if x is None else AnomalyParams(np.asarray(x, dtype=float) * self.unit, self.radius)
        return forward(params, self.geo, self.med, self.cfg)

    def __call__(self, x):
        self.counter.increment()
        sim = self.simulate(x)
        mv = processed_misfits(self.obs, sim, self.tau)
        return mv, float(mv.sum())

    def vector(self, x) -> np.ndarray:
        return self(x)[0]

    def total(self, x) -> float:
        return self(x)[1]


def evaluate_misfit(m: AnomalyParams, obs: SeismogramSet, geo: Geometry, med: Medium,
                    cfg: ForwardConfig, tau: float, counter: CallCounter | None = None):
    """Per-receiver misfits and their sum for one hole configuration."""
    if counter is not None:
        counter.increment()
    sim = forward(m, geo, med, cfg)
    mv = processed_misfits(obs, sim, tau)
    return mv, float(mv.sum())
