"""Waveform containers, processing steps and the least-squares misfit.

The processing order used everywhere in the package is
resample -> truncate to the window -> amplitude alignment -> misfit.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateInputWarning,
    IllConditionedWarning,
    InvalidArgumentError,
    OutOfRangeError,
)

_GRID_RTOL = 1e-9


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal starting at ``t0`` with spacing ``dt``."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise InvalidArgumentError("values must be one-dimensional")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if values.size < 2:
            raise InvalidArgumentError("a time series needs at least 2 samples")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("time series values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def duration(self) -> float:
        return self.dt * (self.values.size - 1)

    def same_grid(self, other: "TimeSeries") -> bool:
        return _same_grid(self.t0, self.dt, len(self), other.t0, other.dt, len(other))


def _same_grid(t0a, dta, na, t0b, dtb, nb) -> bool:
    if na != nb:
        return False
    if not math.isclose(dta, dtb, rel_tol=_GRID_RTOL):
        return False
    return abs(t0a - t0b) <= _GRID_RTOL * max(dta, dtb) * max(na, 1)


@dataclass(frozen=True)
class SeismogramSet:
    """Traces of ``r`` receivers sharing one time grid.

    ``data`` has shape ``(r, n)``; row ``j`` belongs to ``receivers[j]``.
    """

    receivers: tuple
    t0: float
    dt: float
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise InvalidArgumentError("data must be a (receivers, samples) array")
        receivers = tuple(str(r) for r in self.receivers)
        if len(receivers) < 1 or len(receivers) != data.shape[0]:
            raise InvalidArgumentError("one receiver identifier per trace is required")
        if data.shape[1] < 2:
            raise InvalidArgumentError("traces need at least 2 samples")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("trace values must be finite")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "receivers", receivers)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def from_traces(cls, traces: Sequence[TimeSeries], receivers=None) -> "SeismogramSet":
        if not traces:
            raise InvalidArgumentError("at least one trace is required")
        first = traces[0]
        for tr in traces[1:]:
            if not first.same_grid(tr):
                raise InvalidArgumentError("all traces must share t0, dt and length")
        if receivers is None:
            receivers = default_receiver_names(len(traces))
        return cls(tuple(receivers), first.t0, first.dt, np.vstack([tr.values for tr in traces]))

    @property
    def n_receivers(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def trace(self, j: int) -> TimeSeries:
        return TimeSeries(self.t0, self.dt, self.data[j])

    @property
    def traces(self) -> list[TimeSeries]:
        return [self.trace(j) for j in range(self.n_receivers)]

    def with_data(self, data) -> "SeismogramSet":
        return SeismogramSet(self.receivers, self.t0, self.dt, data)


def default_receiver_names(r: int) -> tuple:
    return tuple(f"r{j:02d}" for j in range(r))


def write_seismograms_csv(path, seis: SeismogramSet) -> None:
    """Write ``time, r00, r01, ...`` columns with a header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", *seis.receivers])
        for k, t in enumerate(seis.times):
            writer.writerow([repr(float(t)), *(repr(float(v)) for v in seis.data[:, k])])


def read_seismograms_csv(path) -> SeismogramSet:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "time":
            raise InvalidArgumentError(f"{path}: first column must be 'time'")
        rows = [[float(v) for v in row] for row in reader if row]
    if len(rows) < 2:
        raise InvalidArgumentError(f"{path}: at least two samples are required")
    table = np.asarray(rows)
    times = table[:, 0]
    steps = np.diff(times)
    dt = float(np.mean(steps))
    if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise InvalidArgumentError(f"{path}: time column is not uniformly sampled")
    return SeismogramSet(tuple(h.strip() for h in header[1:]), times[0], dt, table[:, 1:].T)


# ---------------------------------------------------------------------------
# Wavelets
# ---------------------------------------------------------------------------


def ricker(t, f_c: float, t0_w: float = 0.0) -> np.ndarray:
    """Ricker wavelet ``(1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2)`` at times ``t``."""
    arg = (math.pi * f_c * (np.asarray(t, dtype=float) - t0_w)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def ricker_wavelet(f_c: float, t0_w: float, n: int, dt: float, t0: float = 0.0) -> TimeSeries:
    if not f_c > 0:
        raise InvalidArgumentError(f"central frequency must be positive, got {f_c}")
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if n < 2:
        raise InvalidArgumentError("n must be at least 2")
    t = t0 + dt * np.arange(n)
    return TimeSeries(t0, dt, ricker(t, f_c, t0_w))


@dataclass(frozen=True)
class WaveletSpec:
    """Source time function: an analytic Ricker or a tabulated signal.

    For ``kind == "ricker"`` the default delay is ``1.5 / f_c``, which puts
    the wavelet's leading lobe well after ``t = 0``.
    """

    kind: str = "ricker"
    f_c: float = 300e3
    delay: float | None = None
    table: TimeSeries | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("ricker", "tabulated"):
            raise InvalidArgumentError(f"unknown wavelet kind {self.kind!r}")
        if self.kind == "ricker":
            if not self.f_c > 0:
                raise InvalidArgumentError("Ricker central frequency must be positive")
            if self.delay is None:
                object.__setattr__(self, "delay", 1.5 / self.f_c)
        else:
            if self.table is None:
                raise InvalidArgumentError("a tabulated wavelet needs a table")
            if self.delay is None:
                object.__setattr__(self, "delay", 0.0)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "ricker":
            return ricker(t, self.f_c, self.delay)
        tab = self.table
        return np.interp(t - self.delay, tab.times, tab.values, left=0.0, right=0.0)

    def sample(self, n: int, dt: float, t0: float = 0.0) -> TimeSeries:
        return TimeSeries(t0, dt, self(t0 + dt * np.arange(n)))

    @classmethod
    def tabulated(cls, table: TimeSeries, delay: float = 0.0, f_c: float = 300e3) -> "WaveletSpec":
        return cls(kind="tabulated", f_c=f_c, delay=delay, table=table)


# ---------------------------------------------------------------------------
# Processing
# ---------------------------------------------------------------------------


def _check_grid_within(src_t0, src_dt, src_n, t0, dt, n):
    src_end = src_t0 + src_dt * (src_n - 1)
    end = t0 + dt * (n - 1)
    slack = _GRID_RTOL * max(src_dt, dt) * max(src_n, n)
    if t0 < src_t0 - slack or end > src_end + slack:
        raise OutOfRangeError(
            f"target grid [{t0:.6g}, {end:.6g}] outside source support [{src_t0:.6g}, {src_end:.6g}]"
        )


def _resample_rows(data, src_t0, src_dt, t0, dt, n):
    """Linear interpolation of each row of ``data`` onto a new uniform grid."""
    data = np.atleast_2d(data)
    src_n = data.shape[1]
    _check_grid_within(src_t0, src_dt, src_n, t0, dt, n)
    pos = (t0 + dt * np.arange(n) - src_t0) / src_dt
    # snap rounding noise so coincident samples are copied exactly
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    pos = np.clip(pos, 0.0, src_n - 1)
    i0 = np.minimum(np.floor(pos).astype(int), src_n - 2)
    frac = pos - i0
    return data[:, i0] * (1.0 - frac) + data[:, i0 + 1] * frac


def resample_linear(src: TimeSeries, target_dt: float, target_t0: float, target_n: int) -> TimeSeries:
    if not target_dt > 0:
        raise InvalidArgumentError("target_dt must be positive")
    if target_n < 2:
        raise InvalidArgumentError("target_n must be at least 2")
    values = _resample_rows(src.values, src.t0, src.dt, target_t0, target_dt, target_n)[0]
    return TimeSeries(target_t0, target_dt, values)


def window_count(dt: float, tau: float) -> int:
    """Number of grid samples ``t0 + k dt`` with ``k dt <= tau``."""
    if not tau > 0:
        raise InvalidArgumentError(f"window length must be positive, got {tau}")
    return int(math.floor(tau / dt + 1e-9)) + 1


def window_truncate(ts: TimeSeries, tau: float) -> TimeSeries:
    n = window_count(ts.dt, tau)
    if n > len(ts):
        raise OutOfRangeError(f"window {tau:.6g} s exceeds signal duration {ts.duration:.6g} s")
    return TimeSeries(ts.t0, ts.dt, ts.values[:n])


def _align_rows(obs, sim):
    """Row-wise least-squares scale of ``sim`` onto ``obs``; zero rows get scale 0."""
    num = np.einsum("ij,ij->i", obs, sim)
    den = np.einsum("ij,ij->i", sim, sim)
    zero = den == 0.0
    scale = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return scale, zero


def align_amplitude(obs: TimeSeries, sim: TimeSeries) -> tuple[float, TimeSeries]:
    """Scale factor minimising ``||obs - a sim||^2`` and the scaled ``sim``."""
    if not obs.same_grid(sim):
        raise InvalidArgumentError("align_amplitude needs signals on the same grid")
    scale, zero = _align_rows(obs.values[None, :], sim.values[None, :])
    if zero[0]:
        warnings.warn("simulated trace is identically zero; scale set to 0", DegenerateInputWarning)
    a = float(scale[0])
    return a, TimeSeries(sim.t0, sim.dt, a * sim.values)


def misfit_receiver(obs: TimeSeries, sim: TimeSeries, tau: float) -> float:
    """Half the rectangle-rule integral of the squared residual over ``[0, tau]``."""
    if not obs.same_grid(sim):
        raise InvalidArgumentError("misfit_receiver needs signals on the same grid")
    n = window_count(obs.dt, tau)
    if n > len(obs):
        raise OutOfRangeError(f"window {tau:.6g} s exceeds signal duration {obs.duration:.6g} s")
    resid = obs.values[:n] - sim.values[:n]
    return 0.5 * float(np.dot(resid, resid)) * obs.dt


def as_misfit_vector(values) -> np.ndarray:
    mv = np.asarray(values, dtype=float)
    if mv.ndim != 1 or mv.size < 1:
        raise InvalidArgumentError("a misfit vector is a non-empty 1-D array")
    if not np.all(np.isfinite(mv)) or np.any(mv < 0):
        raise InvalidArgumentError("misfit entries must be finite and nonnegative")
    return mv


def misfit_total(mv) -> float:
    return float(np.sum(as_misfit_vector(mv)))


def processed_misfits(obs: SeismogramSet, sim: SeismogramSet, tau: float) -> np.ndarray:
    """Per-receiver misfits after resampling, windowing and amplitude alignment.

    ``sim`` is resampled onto the observation grid, both are cut to ``tau``,
    each simulated trace is scaled by its least-squares factor and the
    half squared residual energy is returned for every receiver.
    """
    if sim.n_receivers != obs.n_receivers:
        raise InvalidArgumentError(
            f"receiver count mismatch: observed {obs.n_receivers}, simulated {sim.n_receivers}"
        )
    n = window_count(obs.dt, tau)
    if n > obs.n_samples:
        raise OutOfRangeError(f"window {tau:.6g} s exceeds observation length")
    if _same_grid(sim.t0, sim.dt, sim.n_samples, obs.t0, obs.dt, obs.n_samples):
        s = sim.data[:, :n]
    else:
        s = _resample_rows(sim.data, sim.t0, sim.dt, obs.t0, obs.dt, n)
    o = obs.data[:, :n]
    scale, zero = _align_rows(o, s)
    if np.any(zero):
        warnings.warn("simulated trace is identically zero; scale set to 0", DegenerateInputWarning)
    resid = o - scale[:, None] * s
    return 0.5 * np.einsum("ij,ij->i", resid, resid) * obs.dt


def processed_misfits_array(obs: SeismogramSet, data, t0: float, dt: float, tau: float) -> np.ndarray:
    """Batched form of :func:`processed_misfits` for raw ``(..., r, T)`` arrays.

    Returns misfits of shape ``(..., r)``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim < 2 or data.shape[-2] != obs.n_receivers:
        raise InvalidArgumentError("simulated array must end in (receivers, samples)")
    n = window_count(obs.dt, tau)
    if n > obs.n_samples:
        raise OutOfRangeError(f"window {tau:.6g} s exceeds observation length")
    lead = data.shape[:-1]
    flat = data.reshape(-1, data.shape[-1])
    if _same_grid(t0, dt, data.shape[-1], obs.t0, obs.dt, obs.n_samples):
        s = flat[:, :n]
    else:
        s = _resample_rows(flat, t0, dt, obs.t0, obs.dt, n)
    o = np.broadcast_to(obs.data[:, :n], lead + (n,)).reshape(-1, n)
    scale, zero = _align_rows(o, s)
    if np.any(zero):
        warnings.warn("simulated trace is identically zero; scale set to 0", DegenerateInputWarning)
    resid = o - scale[:, None] * s
    return (0.5 * np.einsum("ij,ij->i", resid, resid) * obs.dt).reshape(lead)


# ---------------------------------------------------------------------------
# Source signature
# ---------------------------------------------------------------------------


def estimate_source_signature(
    obs: TimeSeries,
    sim_ideal: TimeSeries,
    ricker_ref: TimeSeries,
    water_level: float = 1e-3,
) -> TimeSeries:
    """Recover the effective source wavelet by spectral division.

    Computes ``Q = D R / S`` where ``D``, ``S`` and ``R`` are the spectra of
    the observation, the simulation driven by the reference wavelet and the
    reference wavelet itself. ``|S|`` below ``water_level * max|S|`` is
    raised to that floor with its phase kept. The transform length is the
    signal length; pad the inputs beforehand if wrap-around matters.
    """
    if not (obs.same_grid(sim_ideal) and obs.same_grid(ricker_ref)):
        raise InvalidArgumentError("observation, simulation and wavelet must share a grid")
    if water_level < 0:
        raise InvalidArgumentError("water_level must be nonnegative")
    n = len(obs)
    D = np.fft.rfft(obs.values)
    S = np.fft.rfft(sim_ideal.values)
    R = np.fft.rfft(ricker_ref.values)
    mag = np.abs(S)
    peak = mag.max()
    if peak == 0.0:
        raise InvalidArgumentError("simulated signal has an all-zero spectrum")
    floor = water_level * peak
    if floor > 0.0:
        phase = np.where(mag > 0.0, S / np.where(mag > 0.0, mag, 1.0), 1.0)
        S_reg = np.where(mag < floor, floor * phase, S)
        Q = D * R / S_reg
    else:
        tiny = mag <= np.finfo(float).eps * peak
        if np.any(tiny):
            warnings.warn(
                f"{int(tiny.sum())} spectral zeros in the simulation without a water level; "
                "those bins are set to zero",
                IllConditionedWarning,
            )
        Q = np.where(tiny, 0.0, D * R / np.where(tiny, 1.0, S))
    return TimeSeries(obs.t0, obs.dt, np.fft.irfft(Q, n))
