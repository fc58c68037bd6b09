"""Prescribed displacement sources.

Three variants are supported: a single sinusoid, a sum of sinusoids and
seeded white noise shaped by second-order resonators at the host
structure's bending-mode frequencies.  Every source yields consistent
``(u, u_dot)`` pairs; the random source gets its velocity from resonator
state instead of differentiating a noisy displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import CannotNormalizeError, ContractViolationError, InvalidInputError

STEPS_PER_PERIOD = 400
NOISE_CHUNK = 1 << 17
MIN_NORMALIZE_PERIODS = 50


@dataclass(frozen=True)
class Mode:
    u_m: float
    freq: float
    phase: float = 0.0


@dataclass(frozen=True)
class ResonantMode:
    freq: float
    q_factor: float = 50.0
    gain: float = 1.0


# Calibration choice: Q and relative gains are not published for the beam.
DEFAULT_RANDOM_MODES = (
    ResonantMode(56.0, 50.0, 1.0),
    ResonantMode(334.0, 50.0, 0.4),
    ResonantMode(915.0, 50.0, 0.15),
)


@dataclass(frozen=True)
class Harmonic:
    u_m: float
    freq: float
    phase: float = 0.0


@dataclass(frozen=True)
class Multimodal:
    modes: tuple[Mode, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))


@dataclass(frozen=True)
class RandomModal:
    seed: int
    target_rms: float
    duration: float = 100.0
    modes: tuple[ResonantMode, ...] = field(default=DEFAULT_RANDOM_MODES)
    hold_step: float | None = None  # noise hold interval (s); None -> shortest period / 400

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))


ExcitationSpec = Harmonic | Multimodal | RandomModal


def _check_spec(spec):
    if isinstance(spec, Harmonic):
        modes = [Mode(spec.u_m, spec.freq, spec.phase)]
    elif isinstance(spec, Multimodal):
        modes = list(spec.modes)
    elif isinstance(spec, RandomModal):
        if not spec.modes:
            raise InvalidInputError("random excitation needs at least one mode")
        for m in spec.modes:
            if not m.freq > 0:
                raise InvalidInputError(f"mode frequency must be > 0, got {m.freq!r}")
            if not m.q_factor > 0.5:
                raise InvalidInputError(f"q_factor must be > 0.5, got {m.q_factor!r}")
            if not m.gain >= 0:
                raise InvalidInputError(f"mode gain must be >= 0, got {m.gain!r}")
        if not spec.target_rms > 0:
            raise InvalidInputError(f"target_rms must be > 0, got {spec.target_rms!r}")
        if not spec.duration > 0:
            raise InvalidInputError(f"duration must be > 0, got {spec.duration!r}")
        if spec.hold_step is not None and not spec.hold_step > 0:
            raise InvalidInputError(f"hold_step must be > 0, got {spec.hold_step!r}")
        if not 0 <= int(spec.seed) < 2**64:
            raise InvalidInputError(f"seed must be a 64-bit unsigned integer, got {spec.seed!r}")
        return
    else:
        raise InvalidInputError(f"unknown excitation spec {spec!r}")
    if not modes:
        raise InvalidInputError("excitation needs at least one mode")
    for m in modes:
        if not m.u_m >= 0:
            raise InvalidInputError(f"amplitude must be >= 0, got {m.u_m!r}")
        if not m.freq > 0:
            raise InvalidInputError(f"frequency must be > 0, got {m.freq!r}")


class SineSource:
    """Closed-form sum of sinusoids ``u = scale * sum(u_m sin(w t + phase))``.

    Stateless: any time may be queried in any order.
    """

    stateful = False

    def __init__(self, amps, freqs, phases, scale=1.0):
        self.amps = np.asarray(amps, dtype=float)
        self.freqs = np.asarray(freqs, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        self.scale = float(scale)

    @property
    def lowest_freq(self):
        return float(self.freqs.min())

    @property
    def shortest_period(self):
        return 1.0 / float(self.freqs.max())

    def with_scale(self, scale):
        return SineSource(self.amps, self.freqs, self.phases, scale)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        arg = 2.0 * np.pi * self.freqs * t[..., None] + self.phases
        amps = self.scale * self.amps
        u = (amps * np.sin(arg)).sum(axis=-1)
        ud = (amps * 2.0 * np.pi * self.freqs * np.cos(arg)).sum(axis=-1)
        if u.ndim == 0:
            return float(u), float(ud)
        return u, ud

    def kernel_motion(self):
        """Packed ``(M, R, scale)`` arrays for the compiled integrator."""
        M = np.vstack([self.scale * self.amps, 2.0 * np.pi * self.freqs, self.phases])
        return M, np.zeros((3, 0)), 1.0

    def describe(self):
        parts = [f"{a:g}m@{f:g}Hz" for a, f in zip(self.scale * self.amps, self.freqs)]
        return "sine(" + ", ".join(parts) + ")"


class NoiseStream:
    """Sequential unit-intensity white-noise samples, one sub-stream per mode.

    Mode ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))`` so adding a
    mode leaves the other modes' samples untouched.  Samples are held
    constant over ``hold_step`` and scaled to unit two-sided intensity.
    """

    def __init__(self, seed, n_modes, hold_step):
        self.gens = [np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(i,))))
                     for i in range(n_modes)]
        self.gain = 1.0 / math.sqrt(hold_step)
        self.position = 0

    def take(self, n):
        out = np.empty((len(self.gens), n))
        for i, g in enumerate(self.gens):
            out[i] = g.standard_normal(n)
        out *= self.gain
        self.position += n
        return out


class ModalNoiseSource:
    """Gaussian white noise filtered by a bank of modal resonators.

    Each mode obeys ``x'' + (w/q) x' + w^2 x = gain w^2 n(t)`` with ``n``
    held piecewise constant on a grid of ``hold_step``; the displacement is
    ``scale * sum(x)``.  ``evaluate`` integrates forward on that grid and
    therefore only accepts nondecreasing query times.
    """

    stateful = True

    def __init__(self, modes, seed, hold_step=None, scale=1.0):
        self.modes = tuple(modes)
        self.seed = int(seed)
        self.omegas = np.array([2.0 * np.pi * m.freq for m in self.modes])
        self.qs = np.array([m.q_factor for m in self.modes], dtype=float)
        self.gains = np.array([m.gain for m in self.modes], dtype=float)
        self.hold_step = float(hold_step) if hold_step else self.shortest_period / STEPS_PER_PERIOD
        self.scale = float(scale)
        self.reset()

    @property
    def lowest_freq(self):
        return min(m.freq for m in self.modes)

    @property
    def shortest_period(self):
        return 1.0 / max(m.freq for m in self.modes)

    def with_scale(self, scale):
        return ModalNoiseSource(self.modes, self.seed, self.hold_step, scale)

    def noise_stream(self):
        return NoiseStream(self.seed, len(self.modes), self.hold_step)

    def resonators(self):
        return np.vstack([self.omegas, self.qs, self.gains])

    def kernel_motion(self):
        """Packed ``(M, R, scale)`` arrays for the compiled integrator."""
        return np.zeros((3, 0)), self.resonators(), self.scale

    def describe(self):
        parts = [f"{m.freq:g}Hz/Q{m.q_factor:g}/g{m.gain:g}" for m in self.modes]
        return f"modal-noise(seed={self.seed}, scale={self.scale:.6g}, " + ", ".join(parts) + ")"

    def reset(self):
        n = 2 * len(self.modes)
        self._y = np.zeros(n)
        self._j = 0
        self._t_last = 0.0
        self._stream = self.noise_stream()
        self._buf = np.zeros((len(self.modes), 0))
        self._buf_base = 0
        self._work = (np.empty((4, n)), np.empty(n), np.empty(n))

    def _noise_cover(self, j_hi):
        """Make the buffer hold noise indices ``self._j .. j_hi`` inclusive."""
        end = self._buf_base + self._buf.shape[1]
        if j_hi < end:
            return
        keep = self._buf[:, self._j - self._buf_base:]
        fresh = self._stream.take(max(NOISE_CHUNK, j_hi + 1 - end))
        self._buf = np.concatenate([keep, fresh], axis=1)
        self._buf_base = self._j

    def _grid_index(self, t):
        j = int(math.floor(t / self.hold_step))
        if (j + 1) * self.hold_step <= t:
            j += 1
        return max(j, 0)

    def evaluate(self, t):
        t = float(t)
        if t < 0:
            raise InvalidInputError("motion queried at negative time")
        if t < self._t_last:
            raise ContractViolationError(
                f"random source queried at t={t!r} after t={self._t_last!r}; times must be nondecreasing")
        self._t_last = t
        j_t = self._grid_index(t)
        self._noise_cover(j_t)
        if j_t > self._j:
            K.sample_modes(self._y, self._j, j_t, self.hold_step, self._buf, self._buf_base,
                           self.resonators(), self.scale, 0, np.zeros((1, 2)))
            self._j = j_t
        y = self._y
        rest = t - j_t * self.hold_step
        if rest > 0:
            k, tmp, out = self._work
            wn = self._buf[:, j_t - self._buf_base].copy()
            K.mode_rk4(self._y, rest, self.resonators(), wn, k, tmp, out)
            y = out
        return self.scale * float(y[0::2].sum()), self.scale * float(y[1::2].sum())


MotionSource = SineSource | ModalNoiseSource


def build_excitation(spec) -> MotionSource:
    """Turn an excitation spec into a motion source.

    A random spec is rescaled so its displacement RMS over ``spec.duration``
    equals ``spec.target_rms``.
    """
    _check_spec(spec)
    if isinstance(spec, Harmonic):
        return SineSource([spec.u_m], [spec.freq], [spec.phase])
    if isinstance(spec, Multimodal):
        return SineSource([m.u_m for m in spec.modes], [m.freq for m in spec.modes],
                          [m.phase for m in spec.modes])
    source = ModalNoiseSource(spec.modes, spec.seed, spec.hold_step)
    return normalize_rms(source, spec.target_rms, spec.duration)


def evaluate_motion(source, t):
    """Return ``(u, u_dot)`` at time ``t`` (s)."""
    if not isinstance(source, (SineSource, ModalNoiseSource)):
        raise InvalidInputError(f"not a motion source: {source!r}")
    if np.ndim(t) == 0 and t < 0:
        raise InvalidInputError("motion queried at negative time")
    return source.evaluate(t)


def sample_motion(source, duration, step=None):
    """Sample ``(t, u, u_dot)`` on a uniform grid from 0 to ``duration``.

    For the random source ``step`` must be a whole multiple of its hold
    step; the samples are taken from a fresh pass that does not disturb
    ``source.evaluate``'s state.
    """
    if not duration > 0:
        raise InvalidInputError(f"duration must be > 0, got {duration!r}")
    if isinstance(source, SineSource):
        step = step or source.shortest_period / 64
        n = int(round(duration / step))
        t = np.arange(n + 1) * step
        u, ud = source.evaluate(t)
        return t, np.atleast_1d(u), np.atleast_1d(ud)
    hold = source.hold_step
    decim = 1 if step is None else int(round(step / hold))
    if decim < 1 or abs(decim * hold - (step or hold)) > 1e-9 * hold:
        raise InvalidInputError(f"sample step must be a multiple of the hold step {hold!r}")
    n = int(round(duration / hold))
    n -= n % decim
    out = np.empty((n // decim + 1, 2))
    y = np.zeros(2 * len(source.modes))
    stream = source.noise_stream()
    R = source.resonators()
    k = 0
    while k < n:
        m = min(NOISE_CHUNK, n - k)
        noise = stream.take(m)
        K.sample_modes(y, k, k + m, hold, noise, k, R, source.scale, decim, out)
        k += m
    t = np.arange(out.shape[0]) * (decim * hold)
    return t, out[:, 0].copy(), out[:, 1].copy()


def normalize_rms(source, target_rms, window):
    """Rescale ``source`` so its displacement RMS over ``window`` is ``target_rms``."""
    if not target_rms > 0:
        raise InvalidInputError(f"target_rms must be > 0, got {target_rms!r}")
    if window * source.lowest_freq < MIN_NORMALIZE_PERIODS:
        raise InvalidInputError(
            f"window {window!r} s holds fewer than {MIN_NORMALIZE_PERIODS} periods of the lowest mode")
    _, u, _ = sample_motion(source, window)
    rms = float(np.sqrt(np.mean(u**2)))
    if rms == 0.0 or not math.isfinite(rms):
        raise CannotNormalizeError("source is identically zero over the window")
    return source.with_scale(source.scale * target_rms / rms)
