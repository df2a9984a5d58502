"""Per-vehicle delay, energy, payload and charging model."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FrequencyOutOfRange, InfeasibleWindow, ZeroWorstRate


@dataclass
class SlaTerms:
    eta_min: float  # CPU frequency range, Hz
    eta_max: float
    p_max: float  # transmit power budget, W
    energy_budget: float  # J per round
    dataset_bits: float  # D
    cycles_per_bit: float  # c
    chip_capacitance: float  # zeta / 2
    energy_price: float  # phi, money per J
    participation_fee: float  # phi bar, money per round


@dataclass(frozen=True)
class PayloadSpec:
    dim: int
    fpp_bits: int = 32


def _check_freq(eta, sla: SlaTerms):
    eta = np.asarray(eta, float)
    if np.any(eta < sla.eta_min * (1 - 1e-12)) or np.any(eta > sla.eta_max * (1 + 1e-12)):
        raise FrequencyOutOfRange(f"frequency {eta} outside [{sla.eta_min}, {sla.eta_max}]")


def compute_delay(iters, eta, sla: SlaTerms):
    """Local computation time in seconds for ``iters`` full passes."""
    _check_freq(eta, sla)
    return iters * sla.cycles_per_bit * sla.dataset_bits / eta


def compute_energy(iters, eta, sla: SlaTerms):
    """Local computation energy in joules (dynamic CMOS power model)."""
    _check_freq(eta, sla)
    return iters * sla.chip_capacitance * sla.cycles_per_bit * sla.dataset_bits * eta ** 2


def payload_bits(spec: PayloadSpec):
    """Uplink payload: one sign bit plus ``fpp_bits`` per model coordinate."""
    return spec.dim * (1 + spec.fpp_bits)


def prb_share(prb_count, n_vehicles):
    """Fraction of the band a vehicle can count on in the worst case."""
    return prb_count / n_vehicles if prb_count < n_vehicles else 1.0


def worst_case_tx_ttis(payload, worst_snr, tti, prb_bandwidth, overhead_fraction, prb_count, n_vehicles):
    """Number of slots needed to deliver ``payload`` bits at the worst-case rate."""
    per_slot = tti * (1.0 - overhead_fraction) * prb_bandwidth * np.log2(1.0 + worst_snr)
    per_slot *= prb_share(prb_count, n_vehicles)
    if not per_slot > 0:
        raise ZeroWorstRate("worst-case rate is zero; the payload can never be delivered")
    return int(math.ceil(payload / per_slot - 1e-12))


def cv_charge(energy, sla: SlaTerms):
    return energy * sla.energy_price + sla.participation_fee


def cv_charge_upper(iters, eta, tx_ttis, tti, sla: SlaTerms):
    """Charge using the transmit-energy upper bound (full power every slot)."""
    e = compute_energy(iters, eta, sla) + tti * sla.p_max * tx_ttis
    return cv_charge(e, sla)


def tx_start_slot(round_start, round_end, sojourn, tx_ttis, tti, t_th=None, clamp=True):
    """Earliest slot a vehicle is allowed to start uploading.

    Vehicles expected to leave before the round ends must finish before the
    sojourn bound runs out; the others must finish by the round end. Windows
    that would start before the round are clamped to its first slot with a
    warning, or rejected when ``clamp`` is False.
    """
    if t_th is None:
        t_th = (round_end - round_start) * tti
    if sojourn < t_th:
        start = round_start + int(math.floor(sojourn / tti + 1e-9)) - tx_ttis
    else:
        start = round_end - tx_ttis
    if start < round_start:
        if not clamp:
            raise InfeasibleWindow(f"upload window starts at {start}, before round start {round_start}")
        warnings.warn("upload window clamped to the round start", RuntimeWarning, stacklevel=2)
        start = round_start
    return int(start)


def deadline_slot(round_start, round_end, sojourn, tti):
    """Last slot (exclusive) in which an upload still counts."""
    return int(min(round_end, round_start + math.floor(sojourn / tti + 1e-9)))


def default_chip_capacitance(cycles_per_bit, dataset_bits, eta_max, target_joules=3.0, iters=5):
    """zeta/2 such that ``iters`` passes at eta_max cost ``target_joules``."""
    return target_joules / (iters * cycles_per_bit * dataset_bits * eta_max ** 2)


def max_feasible_iters(sla: SlaTerms, time_budget, tx_energy):
    """Largest real iteration count allowed by time and energy over all frequencies.

    Time allows l <= T eta / (cD), increasing in eta; energy allows
    l <= E / ((zeta/2) c D eta^2), decreasing in eta. Returns ``(l, eta)``
    at the best frequency, or ``(0, eta_min)`` when nothing fits.
    """
    cd = sla.cycles_per_bit * sla.dataset_bits
    e_left = sla.energy_budget - tx_energy
    if time_budget <= 0 or e_left <= 0:
        return 0.0, sla.eta_min
    # intersection of the two caps
    eta_x = (e_left * cd / (sla.chip_capacitance * cd * time_budget)) ** (1.0 / 3.0)
    eta = float(np.clip(eta_x, sla.eta_min, sla.eta_max))
    l_time = time_budget * eta / cd
    l_energy = e_left / (sla.chip_capacitance * cd * eta ** 2)
    return float(min(l_time, l_energy)), eta
