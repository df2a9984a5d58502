"""Unbiased aggregation of local updates under unreliable uploads."""

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateWeights, ZeroSelectionProbability, ZeroSuccessProbability


@dataclass
class AggregationInputs:
    global_vector: np.ndarray
    deltas: np.ndarray  # (V, M) local minus global
    weights: np.ndarray  # p_v
    success: np.ndarray  # bool, upload delivered
    p_success: np.ndarray  # delivery probability used for reweighting
    selected: np.ndarray = None  # bool, partial participation only
    q: float = 1.0  # selection probability |C| / V


def aggregation_weights(lam, dataset_sizes, sojourns):
    """p_v mixing dataset share and sojourn share, normalized to sum 1."""
    D = np.asarray(dataset_sizes, float)
    T = np.asarray(sojourns, float)
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if D.size == 0 or (lam < 1 and D.sum() <= 0) or (lam > 0 and T.sum() <= 0):
        raise DegenerateWeights("dataset sizes or sojourn times sum to zero")
    p = np.zeros(D.size)
    if lam < 1:
        p += (1 - lam) * D / D.sum()
    if lam > 0:
        p += lam * T / T.sum()
    s = p.sum()
    if not s > 0:
        raise DegenerateWeights("weights sum to zero")
    return p / s


def aggregate_fdpc(inp: AggregationInputs):
    """Full participation: w + sum_v p_v 1{delivered} / p_suc * delta_v."""
    succ = np.asarray(inp.success, bool)
    ps = np.asarray(inp.p_success, float)
    if np.any(succ & (ps <= 0)):
        raise ZeroSuccessProbability("a delivered update has zero success probability")
    coef = np.zeros(succ.size)
    coef[succ] = inp.weights[succ] / ps[succ]
    return inp.global_vector + coef @ inp.deltas


def aggregate_pdpc(inp: AggregationInputs):
    """Partial participation: reweight delivered updates by 1 / (q p_suc)."""
    if not inp.q > 0:
        raise ZeroSelectionProbability("selection probability is zero")
    succ = np.asarray(inp.success, bool)
    if inp.selected is not None:
        succ = succ & np.asarray(inp.selected, bool)
    ps = np.asarray(inp.p_success, float)
    if np.any(succ & (ps <= 0)):
        raise ZeroSuccessProbability("a delivered update has zero success probability")
    coef = np.zeros(succ.size)
    coef[succ] = inp.weights[succ] / (inp.q * ps[succ])
    return inp.global_vector + coef @ inp.deltas


def theorem1_bound(B, gamma, L, mu_prime, weights, q, p_success, grad_norm_sq):
    """Upper bound on the expected one-round change of the global loss.

    (B(1+gamma)/mu') (1 + (B L (1+gamma) / (2 mu')) sum_v p_v / (q p_suc_v)) ||grad f||^2
    """
    w = np.asarray(weights, float)
    ps = np.asarray(p_success, float)
    if np.any(ps <= 0):
        raise ZeroSuccessProbability("success probability must be positive")
    if not q > 0:
        raise ZeroSelectionProbability("selection probability is zero")
    lead = B * (1.0 + gamma) / mu_prime
    inner = 1.0 + (B * L * (1.0 + gamma) / (2.0 * mu_prime)) * float(np.sum(w / (q * ps)))
    return lead * inner * grad_norm_sq
