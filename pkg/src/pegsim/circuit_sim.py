"""Time-domain simulation of the piezo insert behind either interface.

The Standard interface is a diode bridge feeding a smoothing capacitor and
a resistive (or constant-voltage) load.  The SECE interface leaves the
insert open-circuited and, at every local maximum of |v_piezo|, removes
its whole charge and passes the energy to an output stage.

Both are integrated with fixed-step RK4 on a uniform grid.  Bridge
transitions and extraction instants are located inside a step by
bisection, re-integrating the sub-step from the step start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import BracketError, ConfigError, IntegrationError, InvalidInputError
from .excitation import NOISE_CHUNK, STEPS_PER_PERIOD, ModalNoiseSource, SineSource
from .lumped_model import PiezoParams

SERIES_COLUMNS = ("t", "u", "u_dot", "v_piezo", "v_rect", "p_load", "p_in")
EVENT_KINDS = {K.DIODE_ON: "diode_on", K.DIODE_OFF: "diode_off", K.SECE_FIRE: "sece_fire"}
DEFAULT_TOL_FRACTION = 1e-6


@dataclass(frozen=True)
class Resistive:
    r_load: float


@dataclass(frozen=True)
class ConstantVoltage:
    """Ideal reservoir held at ``v_load`` (a battery of unlimited capacity)."""

    v_load: float


@dataclass(frozen=True)
class Capacitive:
    r_load: float
    c_out: float = 2.2e-6


@dataclass(frozen=True)
class Ideal:
    efficiency: float = 1.0


@dataclass(frozen=True)
class Flyback:
    l_ind: float
    r_series: float = 0.0
    diode_drop: float = 0.0


@dataclass(frozen=True)
class StandardInterfaceSpec:
    load: Resistive | ConstantVoltage
    c_r: float = 2.2e-6
    diode_drop: float = 0.0

    def __post_init__(self):
        if not self.c_r > 0:
            raise ConfigError(f"c_r must be > 0, got {self.c_r!r}", "interface.standard.c_r")
        if not self.diode_drop >= 0:
            raise ConfigError(f"diode_drop must be >= 0, got {self.diode_drop!r}", "interface.standard.diode_drop")
        _check_load(self.load, "interface.standard")

    def with_load(self, r_load):
        return StandardInterfaceSpec(Resistive(r_load), self.c_r, self.diode_drop)


@dataclass(frozen=True)
class SeceInterfaceSpec:
    output: Capacitive | ConstantVoltage
    extraction: Ideal | Flyback = field(default_factory=Ideal)
    trigger_min_v: float = 0.0

    def __post_init__(self):
        ex = self.extraction
        if isinstance(ex, Ideal):
            if not 0 < ex.efficiency <= 1:
                raise ConfigError(f"efficiency must be in (0, 1], got {ex.efficiency!r}",
                                  "interface.sece.efficiency")
        elif isinstance(ex, Flyback):
            if not ex.l_ind > 0:
                raise ConfigError(f"l_ind must be > 0, got {ex.l_ind!r}", "interface.sece.l_ind")
            if not ex.r_series >= 0:
                raise ConfigError(f"r_series must be >= 0, got {ex.r_series!r}", "interface.sece.r_series")
            if not ex.diode_drop >= 0:
                raise ConfigError(f"diode_drop must be >= 0, got {ex.diode_drop!r}", "interface.sece.diode_drop")
            if isinstance(self.output, ConstantVoltage) and not self.output.v_load > 0:
                raise ConfigError("flyback into a constant-voltage output needs v_load > 0", "interface.sece.v_load")
        else:
            raise ConfigError(f"unknown extraction model {ex!r}", "interface.sece.extraction")
        if not self.trigger_min_v >= 0:
            raise ConfigError(f"trigger_min_v must be >= 0, got {self.trigger_min_v!r}",
                              "interface.sece.trigger_min_v")
        _check_load(self.output, "interface.sece")

    def with_load(self, r_load):
        if not isinstance(self.output, Capacitive):
            raise ConfigError("a load sweep needs a capacitive SECE output stage", "interface.sece.output")
        return SeceInterfaceSpec(Capacitive(r_load, self.output.c_out), self.extraction, self.trigger_min_v)


def _check_load(load, prefix):
    if isinstance(load, (Resistive, Capacitive)):
        if not (load.r_load > 0 and math.isfinite(load.r_load)):
            raise ConfigError(f"r_load must be > 0, got {load.r_load!r}", f"{prefix}.r_load")
        if isinstance(load, Capacitive) and not load.c_out > 0:
            raise ConfigError(f"c_out must be > 0, got {load.c_out!r}", f"{prefix}.c_out")
    elif isinstance(load, ConstantVoltage):
        if not load.v_load >= 0:
            raise ConfigError(f"v_load must be >= 0, got {load.v_load!r}", f"{prefix}.v_load")
    else:
        raise ConfigError(f"unknown load {load!r}", prefix)


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``dt`` and ``event_time_tol`` left as ``None`` resolve to a 400th of the
    shortest excitation period and ``1e-6 * dt``.  ``v_piezo0``/``v_store0``
    are initial voltages of the insert and of the storage capacitor.
    """

    duration: float
    dt: float | None = None
    event_time_tol: float | None = None
    settle: float = 0.2
    record_decimation: int = 1
    v_piezo0: float = 0.0
    v_store0: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"duration must be > 0, got {self.duration!r}", "sim.duration")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt!r}", "sim.dt")
        if self.event_time_tol is not None:
            if not self.event_time_tol > 0:
                raise ConfigError("event_time_tol must be > 0", "sim.event_time_tol")
            if self.dt is not None and not self.event_time_tol < self.dt:
                raise ConfigError("event_time_tol must be smaller than dt", "sim.event_time_tol")
        if not 0 <= self.settle < 1:
            raise ConfigError(f"settle must be in [0, 1), got {self.settle!r}", "sim.settle")
        if int(self.record_decimation) != self.record_decimation or self.record_decimation < 1:
            raise ConfigError("record_decimation must be a positive integer", "output.decimation")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    v_before: float
    energy_extracted: float


@dataclass
class SimResult:
    """Sampled waveforms, event log and averaged powers of one run.

    ``series`` has one row per recorded grid point and the columns in
    ``SERIES_COLUMNS``; ``v_rect`` holds the rectifier voltage (Standard) or
    the output-stage voltage (SECE).  Averages are taken over every grid
    point after the settle window, independent of the record decimation.
    """

    interface: str
    series: np.ndarray
    event_array: np.ndarray
    p_in_avg: float
    p_out_avg: float
    dt: float
    duration: float
    settle_time: float

    def column(self, name):
        return self.series[:, SERIES_COLUMNS.index(name)]

    @property
    def t(self):
        return self.column("t")

    @property
    def events(self):
        return [Event(float(t), EVENT_KINDS[int(k)], float(v), float(e)) for t, k, v, e in self.event_array]

    def events_of(self, kind):
        code = {v: k for k, v in EVENT_KINDS.items()}[kind]
        return self.event_array[self.event_array[:, 1] == code]

    @property
    def averages(self):
        return self.p_in_avg, self.p_out_avg


def detect_extremum(v_prev, v_curr, v_next, trigger_min_v=0.0) -> bool:
    """Three-sample rule: ``v_curr`` is a local maximum at or above the floor."""
    return bool(K.detect_extremum(float(v_prev), float(v_curr), float(v_next), float(trigger_min_v)))


def locate_event(f, t_lo, t_hi, tol):
    """Bisect a sign change of ``f`` on ``[t_lo, t_hi]`` down to ``tol``."""
    if not tol > 0:
        raise InvalidInputError("tol must be > 0")
    f_lo = f(t_lo)
    f_hi = f(t_hi)
    if f_lo == 0:
        return t_lo
    if f_hi == 0:
        return t_hi
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(f"f has the same sign at {t_lo!r} and {t_hi!r}")
    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _grid(source, cfg):
    if isinstance(source, ModalNoiseSource):
        hold = source.hold_step
        dt = cfg.dt if cfg.dt is not None else hold
        ratio = int(round(hold / dt))
        if ratio < 1 or abs(ratio * dt - hold) > 1e-9 * hold:
            raise ConfigError(f"dt must divide the random source's hold step {hold!r}", "sim.dt")
    elif isinstance(source, SineSource):
        dt = cfg.dt if cfg.dt is not None else source.shortest_period / STEPS_PER_PERIOD
        ratio = 1
    else:
        raise InvalidInputError(f"not a motion source: {source!r}")
    tol = cfg.event_time_tol if cfg.event_time_tol is not None else DEFAULT_TOL_FRACTION * dt
    if not tol < dt:
        raise ConfigError("event_time_tol must be smaller than dt", "sim.event_time_tol")
    n = int(round(cfg.duration / dt))
    if n < 2:
        raise ConfigError("duration shorter than two integration steps", "sim.duration")
    k_settle = int(round(cfg.settle * n))
    if k_settle >= n:
        raise InvalidInputError("empty averaging window after settle")
    return dt, ratio, tol, n, k_settle


def _chunks(source, n, ratio):
    """Yield ``(k0, k1, noise, jbase)`` spans; noise keeps two columns of look-back."""
    if not isinstance(source, ModalNoiseSource):
        yield 0, n, np.zeros((0, 1)), 0
        return
    stream = source.noise_stream()
    total = -(-n // ratio)
    prev = None
    j = 0
    while j < total:
        m = min(NOISE_CHUNK, total - j)
        fresh = stream.take(m)
        if prev is None:
            noise, jbase = fresh, j
        else:
            noise, jbase = np.concatenate([prev, fresh], axis=1), j - prev.shape[1]
        yield j * ratio, min(n, (j + m) * ratio), noise, jbase
        prev = noise[:, -2:]
        j += m


def _initial_state(source, v0, w0):
    nr = len(source.modes) if isinstance(source, ModalNoiseSource) else 0
    y = np.zeros(2 + 2 * nr)
    y[0] = v0
    y[1] = w0
    return y


def _finish(kind, rec, ev, nev, sums, dt, n, k_settle):
    if sums[2] == 0:
        raise InvalidInputError("empty averaging window after settle")
    return SimResult(
        interface=kind,
        series=rec,
        event_array=ev[:nev].copy(),
        p_in_avg=float(sums[1] / sums[2]),
        p_out_avg=float(sums[0] / sums[2]),
        dt=dt,
        duration=n * dt,
        settle_time=k_settle * dt,
    )


def simulate_standard(piezo: PiezoParams, iface: StandardInterfaceSpec, motion, cfg: SimConfig) -> SimResult:
    """Simulate the diode bridge + smoothing capacitor interface.

    ``p_out_avg`` is the load power and ``p_in_avg`` the power entering the
    bridge (they differ by the diode losses).
    """
    dt, ratio, tol, n, k_settle = _grid(motion, cfg)
    load = iface.load
    cv = isinstance(load, ConstantVoltage)
    P = np.zeros(K.N_PARAMS)
    P[0], P[1], P[2] = piezo.alpha, piezo.c0, piezo.leak_conductance
    P[3] = iface.c_r
    P[4] = 0.0 if cv else 1.0 / load.r_load
    P[5] = iface.diode_drop
    P[6] = 1.0 if cv else 0.0
    P[7] = load.v_load if cv else 0.0
    y = _initial_state(motion, cfg.v_piezo0, load.v_load if cv else cfg.v_store0)
    st = np.array([0, -1], dtype=np.int64)
    M, R, P[14] = motion.kernel_motion()
    decim = int(cfg.record_decimation)
    rec = np.zeros((n // decim + 1, len(SERIES_COLUMNS)))
    sums = np.zeros(3)
    ev = np.empty((1024, 4))
    nev = 0
    for k0, k1, noise, jbase in _chunks(motion, n, ratio):
        ev, nev, status = K.run_standard(k0, k1, n, dt, tol, y, st, P, M, R,
                                         noise, jbase, ratio, k_settle, decim, rec, sums, ev, nev)
        if status != K.STATUS_OK:
            raise IntegrationError(
                f"bridge switched more than {K.MAX_TRANSITIONS_PER_STEP} times within the step at "
                f"t={st[1] * dt:.6g} s; reduce dt")
    return _finish("standard", rec, ev, nev, sums, dt, n, k_settle)


def simulate_sece(piezo: PiezoParams, iface: SeceInterfaceSpec, motion, cfg: SimConfig) -> SimResult:
    """Simulate synchronous electric charge extraction.

    ``p_in_avg`` is the energy removed from the insert per unit time ("SECE
    in"); ``p_out_avg`` is the average load power ("SECE out").
    """
    dt, ratio, tol, n, k_settle = _grid(motion, cfg)
    ex = iface.extraction
    if isinstance(ex, Flyback):
        quarter = 0.5 * math.pi * math.sqrt(ex.l_ind * piezo.c0)
        if quarter > 0.1 * motion.shortest_period:
            raise ConfigError(
                f"flyback quarter-cycle {quarter:.3g} s exceeds 10% of the shortest excitation period",
                "interface.sece.l_ind")
    out = iface.output
    cv = isinstance(out, ConstantVoltage)
    P = np.zeros(K.N_PARAMS)
    P[0], P[1], P[2] = piezo.alpha, piezo.c0, piezo.leak_conductance
    P[3] = 1.0 if cv else out.c_out
    P[4] = 0.0 if cv else 1.0 / out.r_load
    P[6] = 1.0 if cv else 0.0
    P[7] = out.v_load if cv else 0.0
    if isinstance(ex, Ideal):
        P[8], P[9] = 0.0, ex.efficiency
    else:
        P[8], P[10], P[11], P[12] = 1.0, ex.l_ind, ex.r_series, ex.diode_drop
    P[13] = iface.trigger_min_v
    y = _initial_state(motion, cfg.v_piezo0, 0.0 if cv else cfg.v_store0)
    ya = y.copy()
    hist = np.zeros(5)
    M, R, P[14] = motion.kernel_motion()
    decim = int(cfg.record_decimation)
    rec = np.zeros((n // decim + 1, len(SERIES_COLUMNS)))
    sums = np.zeros(3)
    ev = np.empty((1024, 4))
    nev = 0
    for k0, k1, noise, jbase in _chunks(motion, n, ratio):
        ev, nev = K.run_sece(k0, k1, n, dt, tol, y, ya, hist, P, M, R,
                             noise, jbase, ratio, k_settle, decim, rec, sums, ev, nev)
    return _finish("sece", rec, ev, nev, sums, dt, n, k_settle)
