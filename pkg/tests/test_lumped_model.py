import math

import numpy as np
import pytest

from pegsim.errors import InvalidInputError
from pegsim.lumped_model import (MaterialGeometry, PiezoParams, derive_lumped, electrode_charge, piezo_current,
                                 reaction_force)

# six 9 x 28 x 0.3 mm plates in parallel
AREA = 6 * 9e-3 * 28e-3
T_P = 3e-4


def geom(**kw):
    base = dict(e_coeff=10.0, eps_s=8.29e-9, c_e=6e10, area=AREA, t_p=T_P, w_p=28e-3)
    base.update(kw)
    return MaterialGeometry(**base)


def test_derive_lumped_capacitance_of_reference_insert():
    p = derive_lumped(geom())
    # 8.29e-9 * 1.512e-3 / 3e-4 = 4.1782e-8
    assert p.c0 == pytest.approx(41.78e-9, rel=1e-3)
    assert p.alpha == pytest.approx(10.0 * AREA / T_P)
    assert p.k_e == pytest.approx(6e10 * AREA / 28e-3)
    assert math.isinf(p.r_leak)


def test_zero_coupling_gives_zero_force_factor():
    assert derive_lumped(geom(e_coeff=0.0)).alpha == 0.0


def test_doubling_area_doubles_everything():
    a, b = derive_lumped(geom()), derive_lumped(geom(area=2 * AREA))
    for name in ("c0", "alpha", "k_e"):
        assert getattr(b, name) == pytest.approx(2 * getattr(a, name), rel=1e-15)


@pytest.mark.parametrize("field", ["eps_s", "c_e", "area", "t_p", "w_p"])
@pytest.mark.parametrize("value", [0.0, -1.0])
def test_nonpositive_dimensions_rejected(field, value):
    with pytest.raises(InvalidInputError):
        geom(**{field: value})


def test_params_invariants():
    with pytest.raises(InvalidInputError):
        PiezoParams(c0=0.0, alpha=1e-3, k_e=1e5)
    with pytest.raises(InvalidInputError):
        PiezoParams(c0=1e-9, alpha=-1e-3, k_e=1e5)
    with pytest.raises(InvalidInputError):
        PiezoParams(c0=1e-9, alpha=1e-3, k_e=0.0)
    with pytest.raises(InvalidInputError):
        PiezoParams(c0=1e-9, alpha=1e-3, k_e=1e5, r_leak=0.0)
    p = PiezoParams(c0=1e-9, alpha=1e-3, k_e=1e5)
    assert p.leak_conductance == 0.0
    assert p.with_leakage(1e6).leak_conductance == pytest.approx(1e-6)


def test_piezo_current(piezo):
    assert piezo_current(piezo, 0.0) == 0.0
    assert piezo_current(piezo, 0.1) == pytest.approx(1e-4)
    t = np.linspace(0, 1 / 56, 2001)
    omega, u_m = 2 * math.pi * 56, 1e-3
    i = piezo_current(piezo, u_m * omega * np.cos(omega * t))
    assert np.max(np.abs(i)) == pytest.approx(piezo.alpha * omega * u_m, rel=1e-9)


def test_electrode_charge(piezo):
    assert electrode_charge(piezo, 0.0, 0.0) == 0.0
    assert electrode_charge(piezo, 1e-3, 10.0) == pytest.approx(1e-6 - 4.18e-7, rel=1e-12)
    u = np.linspace(-1e-3, 1e-3, 11)
    assert np.allclose(electrode_charge(piezo, u, piezo.alpha * u / piezo.c0), 0.0, atol=1e-20)


def test_reaction_force(piezo):
    assert reaction_force(piezo, 0.0, 0.0) == 0.0
    assert reaction_force(piezo, 1e-4, 50.0) == pytest.approx(10.05, rel=1e-12)
    spring = PiezoParams(c0=1e-9, alpha=0.0, k_e=2e5)
    assert reaction_force(spring, 3e-4, 123.0) == 2e5 * 3e-4


def test_current_is_charge_derivative_at_constant_voltage(piezo):
    t = np.linspace(0, 0.05, 20001)
    omega = 2 * math.pi * 56
    u = 1e-3 * np.sin(omega * t)
    ud = 1e-3 * omega * np.cos(omega * t)
    q = electrode_charge(piezo, u, 7.0)
    dq = np.gradient(q, t)
    assert np.allclose(dq[1:-1], piezo_current(piezo, ud)[1:-1], rtol=0, atol=1e-6 * piezo.alpha * omega * 1e-3)
