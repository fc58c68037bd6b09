"""Lumped electromechanical model of a piezoelectric insert.

The insert is reduced to three constants: the clamped capacitance ``c0``,
the force factor ``alpha`` and the short-circuit stiffness ``k_e``.  Seen
from its electrodes it behaves as a current source ``alpha * u_dot`` in
parallel with ``c0`` (and with an optional leakage resistor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import InvalidInputError


@dataclass(frozen=True)
class MaterialGeometry:
    """Scalar material constants and insert dimensions (SI units).

    ``w_p`` is the insert width measured along the strain direction.
    """

    e_coeff: float
    eps_s: float
    c_e: float
    area: float
    t_p: float
    w_p: float

    def __post_init__(self):
        for name in ("eps_s", "c_e", "area", "t_p", "w_p"):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise InvalidInputError(f"{name} must be strictly positive, got {value!r}")
        if self.e_coeff < 0 or not math.isfinite(self.e_coeff):
            raise InvalidInputError(f"e_coeff must be >= 0, got {self.e_coeff!r}")


@dataclass(frozen=True)
class PiezoParams:
    c0: float
    alpha: float
    k_e: float
    r_leak: float = math.inf

    def __post_init__(self):
        if not (self.c0 > 0 and math.isfinite(self.c0)):
            raise InvalidInputError(f"c0 must be > 0, got {self.c0!r}")
        if not (self.k_e > 0 and math.isfinite(self.k_e)):
            raise InvalidInputError(f"k_e must be > 0, got {self.k_e!r}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise InvalidInputError(f"alpha must be >= 0, got {self.alpha!r}")
        if not self.r_leak > 0:
            raise InvalidInputError(f"r_leak must be > 0 or inf, got {self.r_leak!r}")

    @property
    def leak_conductance(self) -> float:
        return 0.0 if math.isinf(self.r_leak) else 1.0 / self.r_leak

    def with_leakage(self, r_leak: float) -> "PiezoParams":
        return replace(self, r_leak=r_leak)


# Implementer-chosen numeric fixture: only c0 is a measured value.
REFERENCE_PIEZO = PiezoParams(c0=41.8e-9, alpha=1e-3, k_e=1e5)


def derive_lumped(geom: MaterialGeometry) -> PiezoParams:
    """Reduce material constants and geometry to lumped parameters.

    ``r_leak`` is left infinite; use ``PiezoParams.with_leakage`` to add it.
    """
    if not isinstance(geom, MaterialGeometry):
        raise InvalidInputError("derive_lumped expects a MaterialGeometry")
    ratio = geom.area / geom.t_p
    return PiezoParams(
        c0=geom.eps_s * ratio,
        alpha=geom.e_coeff * ratio,
        k_e=geom.c_e * geom.area / geom.w_p,
    )


def piezo_current(params: PiezoParams, u_dot):
    """Short-circuit current ``alpha * u_dot`` (signed, A)."""
    return params.alpha * u_dot


def electrode_charge(params: PiezoParams, u, v):
    return params.alpha * u - params.c0 * v


def reaction_force(params: PiezoParams, u, v):
    # diagnostic only: never fed back into the prescribed motion
    return params.k_e * u + params.alpha * v
