import math

import numpy as np
import pytest

from pegsim.circuit_sim import (Capacitive, ConstantVoltage, Flyback, Ideal, Resistive, SeceInterfaceSpec,
                                SimConfig, StandardInterfaceSpec, detect_extremum, locate_event,
                                simulate_sece, simulate_standard)
from pegsim.errors import BracketError, ConfigError, InvalidInputError
from pegsim.excitation import Harmonic, build_excitation

from conftest import one_mw_amplitude


def _sine(freq=56.0, u_m=None):
    return build_excitation(Harmonic(one_mw_amplitude(freq) if u_m is None else u_m, freq))


def _eq5(p, freq, u_m, r):
    w = 2 * math.pi * freq
    return r * (p.alpha * w * u_m) ** 2 / (r * p.c0 * w + math.pi / 2) ** 2


def test_rc_decay_without_motion(piezo):
    r, c = 1e3, 2.2e-6
    cfg = SimConfig(duration=5e-3, dt=1e-6, settle=0.0, v_store0=1.0)
    res = simulate_standard(piezo, StandardInterfaceSpec(Resistive(r), c_r=c), _sine(u_m=0.0), cfg)
    t = res.t
    np.testing.assert_allclose(res.column("v_rect"), np.exp(-t / (r * c)), rtol=1e-9, atol=1e-12)
    assert len(res.events) == 0
    assert np.all(res.column("v_piezo") == 0)


def test_sece_without_motion_never_fires(piezo):
    cfg = SimConfig(duration=0.1)
    res = simulate_sece(piezo, SeceInterfaceSpec(Capacitive(1e5)), _sine(u_m=0.0), cfg)
    assert len(res.events) == 0
    assert res.p_in_avg == 0.0 and res.p_out_avg == 0.0


@pytest.mark.parametrize("ratio", [0.3, 1.0, 3.0])
def test_standard_matches_closed_form(piezo, ratio):
    freq = 56.0
    u_m = one_mw_amplitude(freq)
    r = ratio * math.pi / (2 * piezo.c0 * 2 * math.pi * freq)
    res = simulate_standard(piezo, StandardInterfaceSpec(Resistive(r)), _sine(freq), SimConfig(200 / freq, settle=0.5))
    assert res.p_out_avg == pytest.approx(_eq5(piezo, freq, u_m, r), rel=0.02)


def test_sece_matches_closed_form(piezo):
    freq = 334.0
    u_m = one_mw_amplitude(freq)
    res = simulate_sece(piezo, SeceInterfaceSpec(Capacitive(1e5)), _sine(freq), SimConfig(50 / freq, settle=0.2))
    # Two extractions per period, each of 2 alpha^2 U^2 / c0.
    assert res.p_in_avg == pytest.approx(4 * piezo.alpha**2 * u_m**2 * freq / piezo.c0, rel=0.02)
    assert res.p_in_avg == pytest.approx(4e-3, rel=0.02)


def test_huge_load_charges_to_open_circuit_voltage(piezo):
    freq, u_m = 56.0, 5e-4
    iface = StandardInterfaceSpec(Resistive(1e9), c_r=1e-9)
    res = simulate_standard(piezo, iface, _sine(freq, u_m), SimConfig(50 / freq))
    assert res.column("v_rect")[-1] == pytest.approx(piezo.alpha * u_m / piezo.c0, rel=0.01)


def test_open_circuit_voltage_tracks_displacement(piezo):
    src = _sine(56.0, 5e-4)
    iface = SeceInterfaceSpec(Capacitive(1e5), trigger_min_v=1e6)
    res = simulate_sece(piezo, iface, src, SimConfig(0.05))
    assert len(res.events) == 0
    np.testing.assert_allclose(res.column("v_piezo"), piezo.alpha * res.column("u") / piezo.c0,
                               rtol=1e-6, atol=1e-9)


def test_sece_event_energy_and_reset(piezo):
    res = simulate_sece(piezo, SeceInterfaceSpec(Capacitive(1e5)), _sine(), SimConfig(20 / 56.0))
    fires = res.events_of("sece_fire")
    assert len(fires) == pytest.approx(40, abs=1)
    np.testing.assert_allclose(fires[:, 3], 0.5 * piezo.c0 * fires[:, 2] ** 2, rtol=1e-12)
    t, v = res.t, res.column("v_piezo")
    for t_ev, _, v_before, _ in fires:
        k = np.searchsorted(t, t_ev)
        if k < len(t):
            assert abs(v[k]) < 0.02 * abs(v_before)


def test_standard_events_alternate(piezo):
    res = simulate_standard(piezo, StandardInterfaceSpec(Resistive(1e5)), _sine(), SimConfig(10 / 56.0))
    kinds = [e.kind for e in res.events]
    assert set(kinds) <= {"diode_on", "diode_off"}
    assert all(a != b for a, b in zip(kinds, kinds[1:]))


def test_constant_voltage_standard(piezo):
    freq = 56.0
    u_m = one_mw_amplitude(freq)
    v_oc = piezo.alpha * u_m / piezo.c0
    res = simulate_standard(piezo, StandardInterfaceSpec(ConstantVoltage(v_oc / 2)), _sine(freq),
                            SimConfig(50 / freq))
    w = 2 * math.pi * freq
    expected = (2 * piezo.c0 * w / math.pi) * (v_oc / 2) * (v_oc / 2)
    assert res.p_out_avg == pytest.approx(expected, rel=0.02)


def test_flyback_quarter_cycle_too_long(piezo):
    iface = SeceInterfaceSpec(Capacitive(1e5), Flyback(l_ind=100.0))
    with pytest.raises(ConfigError) as exc:
        simulate_sece(piezo, iface, _sine(), SimConfig(0.1))
    assert exc.value.path == "interface.sece.l_ind"


def test_flyback_output_bounded_by_extraction(piezo):
    iface = SeceInterfaceSpec(Capacitive(1e5), Flyback(l_ind=1e-2, r_series=5.0, diode_drop=0.3))
    res = simulate_sece(piezo, iface, _sine(), SimConfig(20 / 56.0, settle=0.0))
    assert 0 < res.p_out_avg < res.p_in_avg


def test_ideal_efficiency_scales_output(piezo):
    cfg = SimConfig(20 / 56.0, settle=0.0)
    full = simulate_sece(piezo, SeceInterfaceSpec(ConstantVoltage(5.0)), _sine(), cfg)
    half = simulate_sece(piezo, SeceInterfaceSpec(ConstantVoltage(5.0), Ideal(0.5)), _sine(), cfg)
    assert half.p_in_avg == pytest.approx(full.p_in_avg, rel=1e-12)
    assert half.p_out_avg == pytest.approx(0.5 * full.p_out_avg, rel=1e-9)


def test_record_decimation_keeps_averages(piezo):
    iface = StandardInterfaceSpec(Resistive(1e5))
    a = simulate_standard(piezo, iface, _sine(), SimConfig(10 / 56.0))
    b = simulate_standard(piezo, iface, _sine(), SimConfig(10 / 56.0, record_decimation=7))
    assert a.p_out_avg == b.p_out_avg
    np.testing.assert_array_equal(a.series[::7], b.series[: len(a.series[::7])])


def test_detect_extremum_examples():
    assert detect_extremum(1.0, 2.0, 1.0)
    assert detect_extremum(1.0, 2.0, 2.0)
    assert not detect_extremum(1.0, 2.0, 3.0)
    assert not detect_extremum(2.0, 2.0, 1.0)
    assert not detect_extremum(1.0, 2.0, 1.0, trigger_min_v=2.5)


def test_locate_event_examples():
    assert locate_event(lambda t: t - 0.3, 0.0, 1.0, 1e-9) == pytest.approx(0.3, abs=1e-9)
    assert locate_event(math.cos, 0.0, 3.0, 1e-10) == pytest.approx(math.pi / 2, abs=1e-10)
    assert locate_event(lambda t: t, 0.0, 1.0, 1e-6) == 0.0
    with pytest.raises(BracketError):
        locate_event(lambda t: t * t + 1, -1.0, 1.0, 1e-6)
    with pytest.raises(InvalidInputError):
        locate_event(lambda t: t, -1.0, 1.0, 0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(duration=0.0)
    with pytest.raises(ConfigError):
        SimConfig(duration=1.0, dt=1e-5, event_time_tol=1e-5)
    with pytest.raises(ConfigError):
        StandardInterfaceSpec(Resistive(-1.0))
    with pytest.raises(ConfigError):
        SeceInterfaceSpec(Capacitive(1e5), Ideal(1.5))


def test_random_dt_must_divide_hold(piezo):
    from pegsim.excitation import ModalNoiseSource, ResonantMode
    src = ModalNoiseSource([ResonantMode(56.0)], seed=1, hold_step=1e-4)
    with pytest.raises(ConfigError):
        simulate_standard(piezo, StandardInterfaceSpec(Resistive(1e5)), src, SimConfig(0.1, dt=3e-5))
