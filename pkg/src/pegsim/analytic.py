"""Closed-form steady-state powers for harmonic displacement.

All formulas assume a leakage-free insert and a displacement that is not
affected by the energy extraction.  They are used as oracles for the
time-domain simulator and for quick design exploration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .lumped_model import PiezoParams

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class HarmonicOperatingPoint:
    u_m: float
    omega: float

    def __post_init__(self):
        if not self.u_m >= 0:
            raise InvalidInputError(f"u_m must be >= 0, got {self.u_m!r}")
        if not self.omega > 0:
            raise InvalidInputError(f"omega must be > 0, got {self.omega!r}")

    @classmethod
    def from_frequency(cls, u_m: float, freq: float) -> "HarmonicOperatingPoint":
        return cls(u_m=u_m, omega=2.0 * math.pi * freq)

    @property
    def freq(self) -> float:
        return self.omega / (2.0 * math.pi)


@dataclass(frozen=True)
class OptimalPoint:
    """Maximum power and the load value that reaches it.

    ``kind`` is ``"resistance"`` (argument in ohms) or ``"voltage"``
    (argument in volts).
    """

    p_max: float
    argument: float
    kind: str


def open_circuit_amplitude(p: PiezoParams, op: HarmonicOperatingPoint) -> float:
    return p.alpha * op.u_m / p.c0


def standard_power_resistive(p: PiezoParams, op: HarmonicOperatingPoint, r_load):
    """Average power into a resistive load behind a diode bridge (``r_load`` may be an array)."""
    if np.any(np.asarray(r_load) < 0):
        raise InvalidInputError(f"r_load must be >= 0, got {r_load!r}")
    source = p.alpha * op.omega * op.u_m
    return r_load * source**2 / (r_load * p.c0 * op.omega + HALF_PI) ** 2


def standard_optimum_resistive(p: PiezoParams, op: HarmonicOperatingPoint) -> OptimalPoint:
    p_max = p.alpha**2 * op.omega * op.u_m**2 / (2.0 * math.pi * p.c0)
    return OptimalPoint(p_max=p_max, argument=math.pi / (2.0 * p.c0 * op.omega), kind="resistance")


def standard_power_voltage(p: PiezoParams, op: HarmonicOperatingPoint, v_load):
    """Average power into a constant-voltage load.

    Returns 0 once ``v_load`` reaches the open-circuit amplitude, where the
    bridge never conducts.
    """
    if np.any(np.asarray(v_load) < 0):
        raise InvalidInputError(f"v_load must be >= 0, got {v_load!r}")
    power = (2.0 * p.c0 * op.omega / math.pi) * v_load * (open_circuit_amplitude(p, op) - v_load)
    if np.ndim(power):
        return np.maximum(power, 0.0)
    return max(power, 0.0)


def standard_optimum_voltage(p: PiezoParams, op: HarmonicOperatingPoint) -> OptimalPoint:
    v_opt = 0.5 * open_circuit_amplitude(p, op)
    return OptimalPoint(p_max=(2.0 * p.c0 * op.omega / math.pi) * v_opt**2, argument=v_opt, kind="voltage")


def sece_power(p: PiezoParams, op: HarmonicOperatingPoint) -> float:
    """Power extracted by synchronous charge extraction, independent of the load."""
    return 2.0 * p.alpha**2 * op.omega * op.u_m**2 / (math.pi * p.c0)


def amplitude_for_standard_power(p: PiezoParams, omega: float, p_max: float) -> float:
    """Displacement amplitude at which the matched Standard interface gives ``p_max``."""
    return math.sqrt(2.0 * math.pi * p.c0 * p_max / (p.alpha**2 * omega))
