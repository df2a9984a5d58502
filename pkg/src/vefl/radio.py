"""Uplink radio model: SIMO channels with MRC over physical resource blocks."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RadioConfig:
    prb_count: int = 10  # Z
    prb_bandwidth: float = 1.8e6  # Hz
    antennas: int = 4  # N at the base station
    noise_psd: float = 10 ** (-174 / 10) * 1e-3  # W/Hz
    overhead_fraction: float = 1.0 / 14.0  # 1/14 or 2/14 of a slot carries pilots
    tti: float = 0.5e-3  # slot length kappa, s
    numerology: int = 1
    bwp_bandwidth: float = 18e6
    pathloss_exponent: float = 3.5
    pathloss_ref_db: float = 34.0  # loss at 1 m
    shadowing_db: float = 4.0
    min_distance: float = 10.0

    @property
    def noise_per_prb(self):
        return self.prb_bandwidth * self.noise_psd

    @property
    def effective_bandwidth(self):
        return self.prb_bandwidth * (1.0 - self.overhead_fraction)


def pathloss_gain(distance, cfg: RadioConfig):
    """Large-scale power gain psi (linear) at ``distance`` metres."""
    d = np.maximum(np.asarray(distance, float), cfg.min_distance)
    loss_db = cfg.pathloss_ref_db + 10.0 * cfg.pathloss_exponent * np.log10(d)
    return 10.0 ** (-loss_db / 10.0)


@dataclass
class ChannelRealization:
    """One block-fading draw for every (vehicle, pRB) of a slot."""

    gains: np.ndarray  # (V, Z) ||h||^2
    pathloss: np.ndarray  # (V,) psi
    shadowing: np.ndarray  # (V,) amplitude factor rho
    fast_fading: np.ndarray  # (V, Z, N) unit-variance complex Gaussian

    def vectors(self):
        amp = np.sqrt(self.pathloss) * self.shadowing
        return amp[:, None, None] * self.fast_fading


def realize_channel(distance, cfg: RadioConfig, rng, n_prb=None) -> ChannelRealization:
    """Pathloss, per-vehicle log-normal shadowing and Rayleigh fading per pRB."""
    d = np.atleast_1d(np.asarray(distance, float))
    z = cfg.prb_count if n_prb is None else n_prb
    psi = pathloss_gain(d, cfg)
    rho = 10.0 ** (rng.normal(0.0, cfg.shadowing_db, size=d.size) / 20.0)
    h = (rng.normal(size=(d.size, z, cfg.antennas)) + 1j * rng.normal(size=(d.size, z, cfg.antennas))) / np.sqrt(2.0)
    gains = psi[:, None] * rho[:, None] ** 2 * np.sum(np.abs(h) ** 2, axis=-1)
    return ChannelRealization(gains, psi, rho, h)


def sample_channel(distance, cfg: RadioConfig, rng, n_prb=None):
    """Channel vectors sqrt(psi) * rho * h for each (vehicle, pRB), shape (V, Z, N)."""
    return realize_channel(distance, cfg, rng, n_prb).vectors()


def channel_gain(H):
    """MRC combining gain ||H||^2 over receive antennas."""
    return np.sum(np.abs(H) ** 2, axis=-1)


def uplink_snr(power, gain, cfg: RadioConfig):
    """Per-pRB post-MRC SNR  P g / (omega sigma^2)."""
    return np.asarray(power, float) * np.asarray(gain, float) / cfg.noise_per_prb


def achievable_rate(powers, gains, assignment, cfg: RadioConfig):
    """Rate in bit/s of each vehicle given per-pRB powers and assignment.

    ``powers``, ``gains`` and ``assignment`` have shape (V, Z); the
    assignment is 0/1 (fractional values scale the share linearly).
    """
    snr = uplink_snr(powers, gains, cfg)
    per_prb = cfg.effective_bandwidth * np.log2(1.0 + snr)
    return np.sum(np.asarray(assignment, float) * per_prb, axis=-1)


def fading_quantile(cfg: RadioConfig, q=0.05, draws=20000, rng=None):
    """q-quantile of the small-scale part (shadowing x MRC fading) of the gain."""
    rng = np.random.default_rng(rng)
    shadow = 10.0 ** (rng.normal(0.0, cfg.shadowing_db, size=draws) / 10.0)
    rayleigh = 0.5 * rng.chisquare(2 * cfg.antennas, size=draws)
    return float(np.quantile(shadow * rayleigh, q))


def worst_case_snr(distance, power_per_prb, cfg: RadioConfig, fading_q):
    """Low-percentile SNR at ``distance`` given a precomputed fading quantile."""
    return uplink_snr(power_per_prb, pathloss_gain(distance, cfg) * fading_q, cfg)
