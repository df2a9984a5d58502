"""Synthetic classification data and non-IID partitioning."""

from dataclasses import dataclass

import numpy as np


@dataclass
class ClientDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    bits: float  # storage size used by the cost model

    @property
    def size(self):
        return int(self.labels.size)


def feature_scales(n_features, condition=1.0):
    """Per-feature scale factors log-spaced from 1 down to 1 / condition."""
    return np.logspace(0.0, -np.log10(condition), n_features) if condition > 1 else np.ones(n_features)


def make_gaussian_pool(n_samples, n_features, n_classes, rng, separation=1.0, noise=1.0, condition=1.0):
    """Gaussian class clusters with random means; labels balanced.

    ``separation`` scales the distance between class means relative to the
    within-class spread. ``condition`` > 1 shrinks the features by
    log-spaced factors down to 1 / condition: the Bayes error is unchanged
    but gradient descent needs many more steps along the weak directions.
    """
    means = rng.normal(0.0, separation / np.sqrt(n_features) * 3.0, size=(n_classes, n_features))
    X, labels = sample_from_means(means, n_samples, rng, noise, feature_scales(n_features, condition))
    return X, labels, means


def sample_from_means(means, n_samples, rng, noise=1.0, scale=None):
    n_classes, n_features = means.shape
    labels = np.arange(n_samples) % n_classes
    rng.shuffle(labels)
    X = means[labels] + noise * rng.normal(size=(n_samples, n_features)) / np.sqrt(n_features) * 3.0
    if scale is not None:
        X = X * scale
    return X, labels


def partition_dirichlet(labels, n_clients, alpha, rng):
    """Split sample indices across clients with Dir(alpha) class proportions.

    Each class is divided according to its own Dirichlet draw over clients.
    Clients that end up empty receive one sample each from the currently
    largest client, so every client holds at least one sample. The pieces
    are disjoint and together cover the whole pool.
    """
    labels = np.asarray(labels)
    if labels.size < n_clients:
        raise ValueError("fewer samples than clients")
    parts = [[] for _ in range(n_clients)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        props = rng.dirichlet(np.full(n_clients, alpha))
        cuts = (np.cumsum(props)[:-1] * idx.size).astype(int)
        for k, piece in enumerate(np.split(idx, cuts)):
            parts[k].extend(piece.tolist())
    for k in range(n_clients):
        if not parts[k]:
            donor = max(range(n_clients), key=lambda j: len(parts[j]))
            parts[k].append(parts[donor].pop())
    return [np.array(sorted(p), dtype=int) for p in parts]
