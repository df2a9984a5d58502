from dataclasses import dataclass

from .aggregation import (AggregationInputs, aggregate_fdpc, aggregate_pdpc,
                          aggregation_weights, theorem1_bound)
from .data import ClientDataset, feature_scales, make_gaussian_pool, partition_dirichlet, sample_from_means
from .model import (ModelParams, accuracy, cross_entropy, dissimilarity_estimate,
                    inexactness, local_objective, local_train, smoothness_estimate)


@dataclass
class LearningConfig:
    """Learning hyper-parameters and the constants of the convergence bound."""

    prox_mu: float = 0.01
    step_size: float = None  # None: 0.1 / L estimated from the data
    B: float = 1.0
    L: float = 1.0
    sigma: float = 0.0
    gamma: float = 0.0
    mu_prime: float = None

    def __post_init__(self):
        if self.mu_prime is None:
            self.mu_prime = self.prox_mu
