import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

import oracles
from ionlink.arrival import ArrivalDistribution, QuadratureSettings, SpreadModel, build_distribution, detection_window
from ionlink.channel import (
    ChannelReport,
    binary_entropy,
    filtered_distribution,
    filtered_slot,
    likelihood_table,
    missed_detection,
    mutual_information,
    ook_rate,
    optimal_prior,
    wien_report,
)
from ionlink.errors import DomainError
from ionlink.physics import BENZENE, HYDROGEN, SourceConfig
from ionlink.wien import WienConfig, matched_wien

CFG = SourceConfig()
prob = st.floats(0.0, 1.0)


@pytest.fixture(scope="module")
def gaussian():
    tau = np.linspace(-8.0, 8.0, 16001)
    return ArrivalDistribution.from_density(tau, norm.pdf(tau))


def test_full_support_window(gaussian):
    assert missed_detection(gaussian, (-8.0, 16.0)) < 1e-3


def test_six_sigma_window(gaussian):
    w = detection_window(gaussian)
    assert missed_detection(gaussian, w) == pytest.approx(2 * norm.sf(3.0), abs=1e-6)


def test_zero_length_window(gaussian):
    assert missed_detection(gaussian, (0.0, 0.0)) == 1.0


def test_window_outside_support(gaussian):
    with pytest.raises(DomainError):
        missed_detection(gaussian, (20.0, 1.0))


def test_rates():
    assert ook_rate(1.364e-7) == pytest.approx(7.33e6, rel=1e-3)
    assert ook_rate(1.0) == 1.0
    assert ook_rate(1e-9) == pytest.approx(1e9, rel=1e-15)
    with pytest.raises(DomainError):
        ook_rate(0.0)


def test_report_identities():
    r = ChannelReport(2.5e-8, 0.003, 0.4, mutual_information(0.4))
    assert r.rate == 1.0 / 2.5e-8
    assert r.info_rate == r.mutual_info / 2.5e-8
    assert r.info_rate <= r.rate
    assert len(r.to_row()) == len(ChannelReport.CSV_COLUMNS)


def test_likelihood_tables():
    assert np.array_equal(likelihood_table(1.0), np.eye(2))
    assert np.array_equal(likelihood_table(0.0), [[1.0, 0.0], [1.0, 0.0]])
    assert np.array_equal(likelihood_table(0.5)[1], [0.5, 0.5])
    with pytest.raises(DomainError):
        likelihood_table(1.5)


@given(prob)
def test_likelihood_rows_sum_to_one(p):
    assert np.all(likelihood_table(p).sum(axis=1) == 1.0)


def test_entropy_conventions():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0


@given(prob)
def test_entropy_matches_oracle(p):
    assert binary_entropy(p) == pytest.approx(float(oracles.binary_entropy(p)), abs=1e-12)


def test_mutual_information_examples():
    assert mutual_information(1.0, 0.5) == 1.0
    assert mutual_information(0.0, 0.3) == 0.0
    assert mutual_information(0.5, 0.5) == pytest.approx(0.311278124459, abs=1e-10)


@given(prob, prob)
def test_information_bounded_by_prior_entropy(p_v, q):
    assert mutual_information(p_v, q) <= binary_entropy(q) + 1e-12 <= 1.0 + 1e-12


@given(prob, prob, prob)
def test_information_monotone_in_pass_probability(a, b, q):
    lo, hi = sorted((a, b))
    assert mutual_information(lo, q) <= mutual_information(hi, q) + 1e-12


@given(st.floats(1e-4, 1.0))
def test_optimal_prior_matches_closed_form(p_v):
    q_ref, c_ref = oracles.z_channel_capacity(p_v)
    q, c = optimal_prior(p_v)
    assert c == pytest.approx(float(c_ref), abs=1e-12)
    assert q == pytest.approx(float(q_ref), abs=1e-6)
    assert c >= mutual_information(p_v, 0.5) - 1e-15


def test_optimal_prior_examples():
    assert optimal_prior(1.0)[0] == pytest.approx(0.5, abs=1e-7)
    q, c = optimal_prior(0.5)
    assert q == pytest.approx(0.4, abs=1e-7)
    assert c == pytest.approx(math.log2(1.25), abs=1e-12)
    assert optimal_prior(1e-9)[1] < 1e-8


def test_filtered_slot_shorter_than_unfiltered():
    spread = SpreadModel.from_config(HYDROGEN, CFG)
    full = detection_window(build_distribution(HYDROGEN, CFG, spread)).length
    assert filtered_slot(HYDROGEN, CFG, matched_wien(HYDROGEN, CFG, 1e-3), spread) < full


def test_filtered_slot_full_band_equals_unfiltered():
    spread = SpreadModel.from_config(BENZENE, CFG)
    full = detection_window(build_distribution(BENZENE, CFG, spread)).length
    assert filtered_slot(BENZENE, CFG, matched_wien(BENZENE, CFG, 0.05), spread) == pytest.approx(full, rel=1e-9)


def test_filtered_slot_collapses_without_spread():
    spread = SpreadModel(CFG.x0_mean, 0.0, 178.8, sigma_t=1e-13)
    # only a sliver of v0 survives, so the refinement check is not meaningful here
    loose = QuadratureSettings(cell_tol=1.0)
    slot = filtered_slot(BENZENE, CFG, matched_wien(BENZENE, CFG, 1e-13), spread, settings=loose)
    full = detection_window(build_distribution(BENZENE, CFG, spread, settings=loose)).length
    assert slot < 1e-3 * full


def test_empty_band_is_an_error():
    spread = SpreadModel.from_config(BENZENE, CFG)
    far = WienConfig(E_field=4000.0, B_field=4000.0 / 1e6, aperture=1e-4, accel_voltage=1000.0)
    with pytest.raises(DomainError):
        filtered_distribution(BENZENE, CFG, spread, far)


def test_wien_report_orders_rates():
    spread = SpreadModel.from_config(BENZENE, CFG)
    rep = wien_report(BENZENE, CFG, spread, matched_wien(BENZENE, CFG, 1e-3))
    assert 0 < rep.p_v < 1
    assert rep.info_rate <= rep.rate
    assert rep.missed < 0.01
