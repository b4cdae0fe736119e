import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from ionlink.arrival import SpreadModel, build_distribution
from ionlink.errors import ConfigError, DomainError
from ionlink.physics import BENZENE, ELEMENTARY_CHARGE, HYDROGEN, SPECIES, SourceConfig
from ionlink.wien import (
    WienConfig,
    aperture_offset,
    deflection_radius,
    matched_wien,
    net_force,
    pass_band,
    pass_probability,
    selected_velocity,
    speed_pass_probability,
)

CFG = SourceConfig()
# frozen: 2 * 1000 * 0.001 / (3.45 * 0.3937 * 4000)
KAPPA_1MM = 3.681166782623e-4


def ref_wien(**kw):
    base = dict(E_field=4000.0, B_field=0.01, aperture=1e-3, accel_voltage=1000.0)
    base.update(kw)
    return WienConfig(**base)


def test_selected_velocity():
    assert selected_velocity(ref_wien()) == pytest.approx(4.0e5, rel=1e-15)
    assert selected_velocity(ref_wien(B_field=0.02)) == pytest.approx(2.0e5, rel=1e-15)


def test_matched_to_hydrogen():
    V = 1131.9
    v_s = math.sqrt(2 * HYDROGEN.charge_to_mass * V)
    w = WienConfig.matched(v_s, aperture=1e-3, accel_voltage=V)
    assert w.B_field == pytest.approx(4000.0 / v_s, rel=1e-15)
    assert selected_velocity(w) == pytest.approx(v_s, rel=1e-14)


def test_force_balance_at_selected_velocity():
    w = ref_wien()
    scale = ELEMENTARY_CHARGE * w.E_field
    assert abs(net_force(w, selected_velocity(w), ELEMENTARY_CHARGE)) <= 1e-12 * scale


def test_radius_examples():
    w = ref_wien()
    v_s = selected_velocity(w)
    assert deflection_radius(w, 2 * v_s) == pytest.approx(2 * 1000.0 / 4000.0, rel=1e-14)
    assert deflection_radius(w, 1.01 * v_s) == pytest.approx(50.0, rel=1e-9)
    assert deflection_radius(w, v_s) == math.inf
    assert deflection_radius(w, 0.99 * v_s) < 0


def test_radius_diverges_near_selected_speed():
    w = ref_wien()
    v_s = selected_velocity(w)
    assert deflection_radius(w, v_s * (1 + 1e-9)) > 1e8


def test_kappa_and_band():
    w = WienConfig(E_field=4000.0, B_field=0.01, aperture=1e-3, accel_voltage=1000.0,
                   plate_length=0.3937, aperture_distance=3.45)
    assert w.kappa == pytest.approx(KAPPA_1MM, rel=1e-12)
    band = pass_band(w)
    v_s = selected_velocity(w)
    assert band.v_low / v_s == pytest.approx(0.9996320, abs=1e-7)
    assert band.v_high / v_s == pytest.approx(1.0003683, abs=1e-7)
    assert band.v_low < v_s < band.v_high


def test_band_collapses_for_vanishing_aperture():
    band = pass_band(ref_wien(aperture=1e-15))
    assert band.width / 4.0e5 < 1e-14


def test_doubling_aperture_doubles_width():
    a = pass_band(ref_wien(aperture=1e-4)).width
    b = pass_band(ref_wien(aperture=2e-4)).width
    assert b / a == pytest.approx(2.0, rel=1e-4)


def test_unbounded_band_rejected():
    with pytest.raises(ConfigError):
        pass_band(ref_wien(aperture=10.0))


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        ref_wien(B_field=0.0)


@given(st.floats(1e-6, 0.5))
def test_band_edges_round_trip_offset(aperture):
    w = ref_wien(aperture=aperture * 3.45 * 0.3937 * 4000.0 / 2000.0 * 0.999)
    band = pass_band(w)
    for v in band:
        assert abs(aperture_offset(w, v)) == pytest.approx(w.aperture, rel=1e-12)


def test_radius_and_offset_differ_by_speed_ratio():
    w = ref_wien()
    v = 1.003 * selected_velocity(w)
    lb_over_r = w.aperture_distance * w.plate_length / deflection_radius(w, v)
    assert -aperture_offset(w, v) == pytest.approx(lb_over_r * selected_velocity(w) / v, rel=1e-12)


def test_literal_mode_is_numerically_zero():
    w = WienConfig(E_field=4000.0, B_field=0.01, aperture=1e-3, accel_voltage=1000.0)
    p = pass_probability(HYDROGEN, CFG, w, "paper-literal")
    assert p < 1e-300


def test_literal_mode_zero_at_operating_point():
    assert pass_probability(BENZENE, CFG, matched_wien(BENZENE, CFG, 1e-3), "paper-literal") == 0.0


def test_unknown_mode():
    with pytest.raises(DomainError):
        pass_probability(BENZENE, CFG, matched_wien(BENZENE, CFG, 1e-3), "magic")


def test_wide_band_passes_everything():
    spread = SpreadModel.from_config(BENZENE, CFG)
    assert speed_pass_probability(BENZENE, CFG, spread, (1.0, 1e9)) == pytest.approx(1.0, abs=1e-12)


def test_central_sigma_band_holds_68_percent():
    _, speeds = oracles.speed_band_probability_mc(78.0, 0.0, math.inf, n=1_000_000, seed=11)
    mu, sd = speeds.mean(), speeds.std()
    spread = SpreadModel.from_config(BENZENE, CFG)
    p = speed_pass_probability(BENZENE, CFG, spread, (mu - sd, mu + sd))
    assert p == pytest.approx(0.6827, abs=0.003)


@pytest.mark.parametrize("aperture", [1e-4, 1e-3, 3e-3])
def test_post_acceleration_matches_monte_carlo(aperture):
    w = matched_wien(BENZENE, CFG, aperture)
    band = pass_band(w)
    mc, _ = oracles.speed_band_probability_mc(78.0, band.v_low, band.v_high, n=1_000_000, seed=3)
    p = pass_probability(BENZENE, CFG, w)
    assert abs(p - mc) < 4 * math.sqrt(p * (1 - p) / 1_000_000) + 1e-9


@pytest.mark.parametrize("mode", ["post-acceleration", "paper-literal"])
def test_pass_probability_monotone_in_aperture(mode):
    apertures = np.geomspace(1e-6, 5e-2, 25)
    ps = [pass_probability(BENZENE, CFG, matched_wien(BENZENE, CFG, a), mode) for a in apertures]
    assert all(b >= a - 1e-12 for a, b in zip(ps, ps[1:]))
    assert all(0.0 <= p <= 1.0 for p in ps)


@pytest.mark.parametrize("name", sorted(SPECIES))
def test_filtering_narrows_arrival_spread(name):
    sp = SPECIES[name]
    spread = SpreadModel.from_config(sp, CFG)
    full = build_distribution(sp, CFG, spread)
    cut = build_distribution(sp, CFG, spread, band=tuple(pass_band(matched_wien(sp, CFG, 3e-4))))
    assert cut.std < full.std
