"""Post-processing: power averages, load sweeps, spectra and gain reports."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from .circuit_sim import (Capacitive, Resistive, SeceInterfaceSpec, SimConfig, StandardInterfaceSpec,
                          simulate_sece, simulate_standard)
from .errors import ConfigError, InvalidInputError, PegError
from .excitation import ExcitationSpec, ModalNoiseSource, RandomModal, SineSource, build_excitation
from .lumped_model import PiezoParams

DEFAULT_GRID_POINTS = 30


@dataclass(frozen=True)
class SweepCurve:
    """Standard and SECE powers over a load-resistance grid.

    ``metadata`` carries the excitation descriptor, the piezo parameters and
    the seed (``None`` for closed-form excitation).
    """

    r_load: np.ndarray
    p_standard: np.ndarray
    p_sece_in: np.ndarray
    p_sece_out: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float) for c in
                (self.r_load, self.p_standard, self.p_sece_in, self.p_sece_out)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise InvalidInputError("sweep columns must be 1-D and of equal length")
        if cols[0].size and np.any(np.diff(cols[0]) <= 0):
            raise InvalidInputError("r_load must be strictly increasing")
        if any(np.any(c < 0) for c in cols[1:]):
            raise InvalidInputError("powers must be >= 0")
        for name, c in zip(("r_load", "p_standard", "p_sece_in", "p_sece_out"), cols):
            object.__setattr__(self, name, c)

    @property
    def points(self):
        return list(zip(self.r_load.tolist(), self.p_standard.tolist(),
                        self.p_sece_in.tolist(), self.p_sece_out.tolist()))

    def __len__(self):
        return self.r_load.size

    def __eq__(self, other):
        if not isinstance(other, SweepCurve):
            return NotImplemented
        return self.points == other.points and self.metadata == other.metadata


@dataclass(frozen=True)
class Spectrum:
    freq: np.ndarray
    psd: np.ndarray
    resolution: float
    window: str

    @property
    def bins(self):
        return list(zip(self.freq.tolist(), self.psd.tolist()))

    def variance(self):
        """Integral of the density over frequency."""
        return float(np.sum(self.psd) * self.resolution)


@dataclass(frozen=True)
class GainSummary:
    p_standard_max: float
    r_opt_measured: float
    p_sece_in: float
    p_sece_out: float
    gain_in: float
    gain_out: float

    def as_dict(self):
        return {
            "p_standard_max_W": self.p_standard_max,
            "r_opt_measured_ohm": self.r_opt_measured,
            "p_sece_in_W": self.p_sece_in,
            "p_sece_out_W": self.p_sece_out,
            "gain_in": self.gain_in,
            "gain_out": self.gain_out,
        }


def average_power(series, settle_fraction=0.0):
    """Mean of ``series`` after dropping its leading ``settle_fraction``."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("power series must be a non-empty 1-D array")
    if not 0 <= settle_fraction < 1:
        raise InvalidInputError(f"settle_fraction must be in [0, 1), got {settle_fraction!r}")
    k = int(round(settle_fraction * x.size))
    if k >= x.size:
        raise InvalidInputError("empty averaging window after settle")
    return float(x[k:].mean())


def log_grid(r_min, r_max, points=DEFAULT_GRID_POINTS):
    if not (0 < r_min < r_max) or points < 2:
        raise InvalidInputError("log grid needs 0 < r_min < r_max and at least 2 points")
    return np.geomspace(r_min, r_max, int(points))


def _as_source(excitation):
    if isinstance(excitation, (SineSource, ModalNoiseSource)):
        return excitation
    if isinstance(excitation, ExcitationSpec.__args__):
        return build_excitation(excitation)
    raise InvalidInputError(f"not an excitation spec or motion source: {excitation!r}")


def _annotate(err, r_load):
    msg = f"at r_load={r_load!r}: {err}"
    if isinstance(err, ConfigError):
        new = ConfigError(msg)
        new.path = err.path
    else:
        try:
            new = type(err)(msg)
        except TypeError:
            new = PegError(msg)
    new.r_load = r_load
    return new


def _sweep_point(args):
    piezo, source, std, sece, r, cfg = args
    try:
        p_std = simulate_standard(piezo, std.with_load(r), source, cfg).p_out_avg
        res = simulate_sece(piezo, sece.with_load(r), source, cfg)
    except PegError as err:
        raise _annotate(err, r) from err
    return max(p_std, 0.0), max(res.p_in_avg, 0.0), max(res.p_out_avg, 0.0)


def sweep_load(piezo: PiezoParams, excitation, interfaces, r_loads, cfg: SimConfig, workers=1) -> SweepCurve:
    """Run both interfaces at every load of ``r_loads``.

    ``interfaces`` is a ``(standard, sece)`` pair of templates whose load
    resistance is replaced per point; either entry may be ``None`` for the
    defaults.  All points see the same motion stream.  With ``workers > 1``
    points run in a process pool and are merged in grid order, so the curve
    does not depend on the pool size.
    """
    r = np.asarray(r_loads, dtype=float).ravel()
    if r.size == 0:
        raise InvalidInputError("load grid is empty")
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise InvalidInputError("load resistances must be positive and finite")
    r = np.sort(r)
    if np.any(np.diff(r) == 0):
        raise InvalidInputError("load grid has duplicate values")
    std, sece = interfaces if interfaces is not None else (None, None)
    std = std or StandardInterfaceSpec(Resistive(1.0))
    sece = sece or SeceInterfaceSpec(Capacitive(1.0))
    source = _as_source(excitation)
    jobs = [(piezo, source, std, sece, float(x), cfg) for x in r]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    rows = np.array(rows).reshape(-1, 3)
    meta = {
        "excitation": source.describe(),
        "piezo": f"c0={piezo.c0!r} alpha={piezo.alpha!r} k_e={piezo.k_e!r} r_leak={piezo.r_leak!r}",
        "seed": excitation.seed if isinstance(excitation, RandomModal)
        else getattr(source, "seed", None),
    }
    return SweepCurve(r, rows[:, 0], rows[:, 1], rows[:, 2], meta)


def psd(samples, sample_rate, segment_len=4096, overlap_fraction=0.5) -> Spectrum:
    """One-sided Welch density of a uniformly sampled displacement (m^2/Hz).

    Hann window, constant detrend per segment; the density integrates to the
    signal variance.
    """
    x = np.asarray(samples, dtype=float).ravel()
    seg = int(segment_len)
    if seg < 2 or seg & (seg - 1):
        raise InvalidInputError(f"segment_len must be a power of two, got {segment_len!r}")
    if x.size < seg:
        raise InvalidInputError(f"{x.size} samples are fewer than one segment of {seg}")
    if not 0 <= overlap_fraction < 1:
        raise InvalidInputError(f"overlap_fraction must be in [0, 1), got {overlap_fraction!r}")
    if not sample_rate > 0:
        raise InvalidInputError(f"sample_rate must be > 0, got {sample_rate!r}")
    f, p = signal.welch(x, fs=sample_rate, window="hann", nperseg=seg,
                        noverlap=int(round(overlap_fraction * seg)), detrend="constant",
                        scaling="density")
    return Spectrum(f, p, float(sample_rate) / seg, f"hann/{seg}/overlap={overlap_fraction:g}")


def spectral_peaks(spec: Spectrum, count=3, min_separation_hz=0.0):
    """Frequencies of the ``count`` most prominent local maxima, ascending."""
    dist = max(1, int(min_separation_hz / spec.resolution)) if min_separation_hz > 0 else None
    idx, props = signal.find_peaks(np.log(spec.psd + 1e-300), distance=dist, prominence=0)
    top = idx[np.argsort(props["prominences"])[::-1][:count]]
    return np.sort(spec.freq[top])


def gain_report(curve: SweepCurve) -> GainSummary:
    """Compare SECE with the best Standard point of the same grid."""
    if len(curve) == 0:
        raise InvalidInputError("empty sweep curve")
    i = int(np.argmax(curve.p_standard))
    p_max = float(curve.p_standard[i])
    p_in = float(curve.p_sece_in[i])
    p_out = float(curve.p_sece_out[i])
    return GainSummary(p_max, float(curve.r_load[i]), p_in, p_out,
                       _ratio(p_in, p_max), _ratio(p_out, p_max))


def _ratio(a, b):
    if b > 0:
        return a / b
    return math.inf if a > 0 else 0.0


def standard_maximum(piezo: PiezoParams, source, cfg: SimConfig, r_lo, r_hi, template=None, xtol=1e-3):
    """Refine the Standard optimum between ``r_lo`` and ``r_hi`` (bounded search on log r).

    Returns ``(r_opt, p_max)``.
    """
    template = template or StandardInterfaceSpec(Resistive(1.0))
    source = _as_source(source)

    def neg(logr):
        return -simulate_standard(piezo, template.with_load(math.exp(logr)), source, cfg).p_out_avg

    res = optimize.minimize_scalar(neg, bounds=(math.log(r_lo), math.log(r_hi)), method="bounded",
                                   options={"xatol": xtol})
    return math.exp(res.x), -float(res.fun)


def harmonic_gain(piezo: PiezoParams, source, cfg: SimConfig, r_guess, span=4.0):
    """Simulated gain_in for closed-form excitation, with a refined Standard maximum.

    The Standard optimum is searched within ``[r_guess / span, r_guess * span]``.
    SECE-in is evaluated with an ideal extraction and does not depend on the
    output load.
    """
    source = _as_source(source)
    _, p_max = standard_maximum(piezo, source, cfg, r_guess / span, r_guess * span)
    p_in = simulate_sece(piezo, SeceInterfaceSpec(Capacitive(r_guess)), source, cfg).p_in_avg
    return _ratio(p_in, p_max)


def calibrate_leakage(piezo: PiezoParams, source, cfg: SimConfig, r_guess, target_gain=3.0,
                      r_leak_lo=1e5, r_leak_hi=1e9, rtol=1e-3):
    """Bisect on log r_leak for the leakage that brings gain_in to ``target_gain``.

    Smaller r_leak means more leakage and a lower gain; the bracket must
    straddle the target.  Returns ``(r_leak, gain_in)``.
    """
    source = _as_source(source)

    def excess(log_r):
        return harmonic_gain(piezo.with_leakage(math.exp(log_r)), source, cfg, r_guess) - target_gain

    lo, hi = math.log(r_leak_lo), math.log(r_leak_hi)
    if excess(lo) > 0 or excess(hi) < 0:
        raise InvalidInputError(f"gain {target_gain} is not bracketed by r_leak in [{r_leak_lo}, {r_leak_hi}]")
    log_r = optimize.bisect(excess, lo, hi, xtol=rtol)
    r_leak = math.exp(log_r)
    return r_leak, excess(log_r) + target_gain
