import numpy as np
import pytest
from hypothesis import given, strategies as st

from vefl.radio import (RadioConfig, achievable_rate, channel_gain, fading_quantile, pathloss_gain,
                        realize_channel, sample_channel, uplink_snr, worst_case_snr)

RADIO = RadioConfig()


def test_channel_shape():
    H = sample_channel([100.0, 200.0, 300.0], RADIO, np.random.default_rng(0))
    assert H.shape == (3, RADIO.prb_count, 4)
    assert H.dtype == complex


def test_channel_replay():
    a = sample_channel([120.0], RADIO, np.random.default_rng(7))
    b = sample_channel([120.0], RADIO, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_mean_gain_decreases_with_distance():
    rng = np.random.default_rng(3)
    near = channel_gain(sample_channel(np.full(10_000, 100.0), RADIO, rng, n_prb=1)).mean()
    far = channel_gain(sample_channel(np.full(10_000, 300.0), RADIO, rng, n_prb=1)).mean()
    assert near > far


def test_mean_gain_matches_pathloss():
    cfg = RadioConfig(shadowing_db=0.0)
    g = channel_gain(sample_channel(np.full(20_000, 250.0), cfg, np.random.default_rng(4), n_prb=1))
    assert g.mean() == pytest.approx(cfg.antennas * pathloss_gain(250.0, cfg), rel=0.02)


def test_realization_gains_consistent():
    ch = realize_channel([80.0, 400.0], RADIO, np.random.default_rng(9))
    assert np.allclose(ch.gains, channel_gain(ch.vectors()))


def test_snr_zero_power():
    assert uplink_snr(0.0, 1e-9, RADIO) == 0.0


@given(st.floats(1e-6, 1.0), st.floats(1e-15, 1e-6))
def test_snr_linear_in_power(p, g):
    assert uplink_snr(2 * p, g, RADIO) == pytest.approx(2 * uplink_snr(p, g, RADIO), rel=1e-12)


def test_snr_hand_value():
    cfg = RadioConfig(noise_psd=1e-13 / 1.8e6)
    assert cfg.noise_per_prb == pytest.approx(1e-13)
    assert uplink_snr(0.2, 1e-9, cfg) == pytest.approx(2000.0)
    assert 10 * np.log10(2000.0) == pytest.approx(33.0, abs=0.1)


def test_rate_unassigned_is_zero():
    P = np.full((1, 10), 0.02)
    g = np.full((1, 10), 1e-9)
    assert achievable_rate(P, g, np.zeros((1, 10)), RADIO)[0] == 0.0


def test_rate_one_prb_unit_snr():
    g = RADIO.noise_per_prb  # power 1 W gives snr 1
    P = np.zeros((1, 10))
    P[0, 0] = 1.0
    A = np.zeros((1, 10))
    A[0, 0] = 1
    r = achievable_rate(P, np.full((1, 10), g), A, RADIO)[0]
    assert r == pytest.approx(RADIO.prb_bandwidth * (1 - RADIO.overhead_fraction))


def test_rate_all_prbs_snr_three():
    Z = RADIO.prb_count
    g = np.full((1, Z), 3 * RADIO.noise_per_prb)
    r = achievable_rate(np.ones((1, Z)), g, np.ones((1, Z)), RADIO)[0]
    assert r == pytest.approx(RADIO.effective_bandwidth * 2 * Z)


def test_fading_quantile_and_worst_snr():
    q = fading_quantile(RADIO, 0.05, rng=0)
    assert 0 < q < RADIO.antennas
    median = fading_quantile(RADIO, 0.5, rng=0)
    assert q < median
    s = worst_case_snr(500.0, 0.02, RADIO, q)
    assert s == pytest.approx(uplink_snr(0.02, pathloss_gain(500.0, RADIO) * q, RADIO))
    # about 5% of actual draws fall below the quantile
    ch = realize_channel(np.full(20_000, 500.0), RADIO, np.random.default_rng(11), n_prb=1)
    frac = np.mean(ch.gains[:, 0] < pathloss_gain(500.0, RADIO) * q)
    assert frac == pytest.approx(0.05, abs=0.01)
