import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from ionlink.errors import ConfigError, DomainError
from ionlink.physics import (
    BENZENE,
    HYDROGEN,
    NEVER_ARRIVES,
    SPECIES,
    InitialState,
    IonSpecies,
    SourceConfig,
    accelerated_speed,
    flight_time,
    flight_time_components,
    get_species,
    thermal_velocity_sigma,
    time_of_flight,
    wiley_mclaren_tof,
)

# frozen from tests/oracles.py (50-digit closed form, cross-checked by ODE integration)
BENZENE_V2 = 49739.140024
BENZENE_T1 = 9.08070136936e-7
BENZENE_T2 = 3.1993097841e-7
BENZENE_T3 = 1.25374101703e-5
BENZENE_TOTAL = 1.37654112857e-5
SIGMA_V_HYDROGEN = 1573.848276
SIGMA_V_BENZENE = 178.8258494

X0_MID = 0.0058


def test_frozen_values_match_oracle():
    ref = oracles.tof_mp(78.0, "0.0058")
    assert float(ref["total"]) == pytest.approx(BENZENE_TOTAL, rel=1e-11)
    assert float(ref["v2"]) == pytest.approx(BENZENE_V2, rel=1e-11)
    assert float(ref["V_total"]) == pytest.approx(1000.0, rel=1e-12)
    assert float(oracles.thermal_sigma(1.007, 300)) == pytest.approx(SIGMA_V_HYDROGEN, rel=1e-9)
    assert oracles.tof_ode(78.0, 0.0058) == pytest.approx(BENZENE_TOTAL, rel=1e-9)


def test_thermal_sigma_values():
    assert thermal_velocity_sigma(HYDROGEN, 300.0) == pytest.approx(SIGMA_V_HYDROGEN, rel=1e-9)
    assert thermal_velocity_sigma(BENZENE, 300.0) == pytest.approx(SIGMA_V_BENZENE, rel=1e-9)


@given(st.sampled_from(list(SPECIES.values())), st.floats(1.0, 5000.0))
def test_thermal_sigma_sqrt_scaling(species, temperature):
    assert thermal_velocity_sigma(species, 4 * temperature) == pytest.approx(
        2 * thermal_velocity_sigma(species, temperature), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -5.0])
def test_thermal_sigma_rejects_nonpositive_temperature(bad):
    with pytest.raises(DomainError):
        thermal_velocity_sigma(HYDROGEN, bad)


def test_species_rejects_nonpositive_mass():
    with pytest.raises(DomainError):
        IonSpecies("ghost", 0.0)


def test_unknown_species_is_config_error():
    with pytest.raises(ConfigError):
        get_species("xenon")


def test_speed_zero_field_identity():
    cfg = SourceConfig.zero_field_config()
    assert accelerated_speed(BENZENE, cfg, X0_MID, 100.0) == pytest.approx(100.0, rel=1e-15)


def test_benzene_drift_speed():
    assert accelerated_speed(BENZENE, SourceConfig(), X0_MID, 0.0) == pytest.approx(BENZENE_V2, rel=1e-10)


def test_four_times_mass_halves_speed():
    heavy = IonSpecies("heavy", 4 * BENZENE.mass)
    cfg = SourceConfig()
    assert accelerated_speed(heavy, cfg, X0_MID, 0.0) == pytest.approx(
        0.5 * accelerated_speed(BENZENE, cfg, X0_MID, 0.0), rel=1e-14)


def test_benzene_components_and_total():
    t1, t2, t3 = flight_time_components(BENZENE, SourceConfig(), X0_MID, 0.0)
    assert t1 == pytest.approx(BENZENE_T1, rel=1e-10)
    assert t2 == pytest.approx(BENZENE_T2, rel=1e-10)
    assert t3 == pytest.approx(BENZENE_T3, rel=1e-10)
    total = time_of_flight(BENZENE, SourceConfig(), InitialState(X0_MID))
    assert total == pytest.approx(BENZENE_TOTAL, rel=1e-10)


def test_zero_field_uniform_motion():
    cfg = SourceConfig.zero_field_config(d1=0.0116, d2=0.010, L=1.0 - 0.010 - 0.005, x0_mean=0.005)
    assert time_of_flight(BENZENE, cfg, InitialState(0.005, 1000.0)) == pytest.approx(1.0e-3, rel=1e-14)


def test_zero_field_backward_ion_never_arrives():
    cfg = SourceConfig.zero_field_config()
    assert time_of_flight(BENZENE, cfg, InitialState(X0_MID, -5.0)) == NEVER_ARRIVES
    assert time_of_flight(BENZENE, cfg, InitialState(X0_MID, 0.0)) == NEVER_ARRIVES


@given(st.floats(1.0, 2000.0), st.floats(0.001, 0.0110))
def test_turnaround_adds_two_u_over_a(u, x0):
    cfg = SourceConfig()
    a1 = BENZENE.charge_to_mass * cfg.E1
    back = time_of_flight(BENZENE, cfg, InitialState(x0, -u))
    fwd = time_of_flight(BENZENE, cfg, InitialState(x0, u))
    assert back - fwd == pytest.approx(2 * u / a1, rel=1e-7)


def test_time_offset_is_additive():
    cfg = SourceConfig()
    base = time_of_flight(BENZENE, cfg, InitialState(X0_MID, 10.0))
    assert time_of_flight(BENZENE, cfg, InitialState(X0_MID, 10.0, 3e-9)) == pytest.approx(base + 3e-9, rel=1e-14)


@pytest.mark.parametrize("x0", [0.0116, 0.02])
def test_position_outside_region_rejected(x0):
    with pytest.raises(DomainError):
        time_of_flight(BENZENE, SourceConfig(), InitialState(x0))


def test_initial_state_rejects_nonpositive_position():
    with pytest.raises(DomainError):
        InitialState(0.0)


def test_decelerating_config_rejected():
    with pytest.raises(ConfigError):
        SourceConfig(V2=0.0)  # E2 < 0
    with pytest.raises(ConfigError):
        SourceConfig(V0=-65.96)  # E1 < 0


def test_zero_first_field_rejected():
    with pytest.raises(ConfigError):
        SourceConfig(V0=0.0, V1=0.0)


def test_source_validates_position_spread():
    with pytest.raises(ConfigError):
        SourceConfig(x0_mean=0.0115, sigma_x=1e-4)


def test_flight_time_vectorized_matches_scalar():
    cfg = SourceConfig()
    x = np.array([0.002, 0.0058, 0.009])
    v = np.array([-300.0, 0.0, 250.0])
    vec = flight_time(BENZENE, cfg, x, v)
    for xi, vi, ti in zip(x, v, vec):
        assert flight_time(BENZENE, cfg, xi, vi) == ti


@given(
    st.sampled_from(list(SPECIES.values())),
    st.floats(0.0005, 0.0110),
    st.floats(-3000.0, 3000.0),
    st.floats(-1500.0, -200.0),
    st.floats(0.1, 3.0),
)
def test_flight_time_matches_mpmath(species, x0, v0, V2, L):
    cfg = SourceConfig(V2=V2, L=L)
    ref = oracles.tof_mp(species.mass, x0, v0, V2=V2, L=L)["total"]
    assert flight_time(species, cfg, x0, v0) == pytest.approx(float(ref), rel=1e-11)


@pytest.mark.parametrize("species,x0,v0", [("hydrogen", 0.003, 2500.0), ("argon", 0.008, -400.0),
                                           ("benzene", 0.0058, -300.0)])
def test_flight_time_matches_ode_integration(species, x0, v0):
    sp = get_species(species)
    assert flight_time(sp, SourceConfig(), x0, v0) == pytest.approx(oracles.tof_ode(sp.mass, x0, v0), rel=1e-8)


@given(st.floats(-1500.0, -300.0), st.floats(-1500.0, -300.0))
def test_flight_time_decreases_with_larger_v2_magnitude(a, b):
    lo, hi = sorted((a, b), reverse=True)  # lo has the smaller magnitude
    if lo == hi:
        return
    cfg = SourceConfig()
    assert flight_time(BENZENE, cfg.with_(V2=hi), X0_MID, 0.0) < flight_time(BENZENE, cfg.with_(V2=lo), X0_MID, 0.0)


def test_unit_constant_offset_is_small_and_systematic():
    # amu, eV, V/cm -> microseconds: sqrt(amu / e) * 1e-2 m/cm ... * 1e6 us/s
    exact = float(mp.sqrt(oracles.AMU / oracles.QE) * 1e4)
    assert exact == pytest.approx(1.01805, abs=1e-5)
    ratio = wiley_mclaren_tof(BENZENE, SourceConfig(), InitialState(X0_MID)) / BENZENE_TOTAL
    assert ratio == pytest.approx(1.02 / exact, rel=1e-6)


def test_practical_form_rejects_zero_field():
    with pytest.raises(DomainError):
        wiley_mclaren_tof(BENZENE, SourceConfig.zero_field_config(), InitialState(X0_MID, 10.0))


def test_never_arrives_is_infinite():
    assert math.isinf(NEVER_ARRIVES)
