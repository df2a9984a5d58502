"""Multinomial logistic regression with a proximal local objective."""

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch

_MAGIC = b"VFLM"


@dataclass
class ModelParams:
    """Flat parameter vector of a (d + 1) x K softmax classifier."""

    vector: np.ndarray
    n_features: int
    n_classes: int

    @staticmethod
    def zeros(n_features, n_classes):
        return ModelParams(np.zeros((n_features + 1) * n_classes), n_features, n_classes)

    @property
    def dim(self):
        return self.vector.size

    def matrix(self):
        return self.vector.reshape(self.n_features + 1, self.n_classes)

    def copy(self):
        return ModelParams(self.vector.copy(), self.n_features, self.n_classes)

    def to_bytes(self, fpp_bits=32):
        """Flat little-endian checkpoint: magic, dim, fpp, d, K, then values."""
        if fpp_bits not in (32, 64):
            raise ValueError("fpp_bits must be 32 or 64")
        dtype = "<f4" if fpp_bits == 32 else "<f8"
        head = _MAGIC + struct.pack("<IIII", self.dim, fpp_bits, self.n_features, self.n_classes)
        return head + self.vector.astype(dtype).tobytes()

    @staticmethod
    def from_bytes(blob):
        if blob[:4] != _MAGIC:
            raise ValueError("not a model checkpoint")
        dim, fpp, d, k = struct.unpack("<IIII", blob[4:20])
        dtype = "<f4" if fpp == 32 else "<f8"
        vec = np.frombuffer(blob[20:], dtype=dtype).astype(float)
        if vec.size != dim or dim != (d + 1) * k:
            raise DimensionMismatch("checkpoint header does not match its payload")
        return ModelParams(vec, d, k)


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _check(w, X, n_classes):
    if w.size % n_classes or w.size // n_classes != X.shape[1] + 1:
        raise DimensionMismatch(f"parameter size {w.size} does not fit {X.shape[1]} features x {n_classes} classes")


def cross_entropy(w, X, y, n_classes):
    """Mean softmax cross-entropy and its gradient w.r.t. the flat vector."""
    _check(w, X, n_classes)
    Xa = _augment(X)
    W = w.reshape(Xa.shape[1], n_classes)
    logits = Xa @ W
    logits -= logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    z = ex.sum(axis=1, keepdims=True)
    prob = ex / z
    n = X.shape[0]
    loss = float(np.mean(np.log(z[:, 0]) - logits[np.arange(n), y]))
    prob[np.arange(n), y] -= 1.0
    grad = (Xa.T @ prob) / n
    return loss, grad.ravel()


def local_objective(w, X, y, anchor, mu, n_classes):
    """Proximal local loss F(w) + mu/2 ||w - anchor||^2 and its gradient."""
    w = np.asarray(w, float)
    anchor = np.asarray(anchor, float)
    if anchor.shape != w.shape:
        raise DimensionMismatch("anchor and parameters differ in shape")
    loss, grad = cross_entropy(w, X, y, n_classes)
    diff = w - anchor
    return loss + 0.5 * mu * float(diff @ diff), grad + mu * diff


def local_train(global_params: ModelParams, data, iters, step, mu):
    """``iters`` full-batch gradient steps on the proximal objective.

    Returns the new parameters; the anchor is the received global model.
    """
    anchor = global_params.vector
    w = anchor.copy()
    X, y, k = data.features, data.labels, global_params.n_classes
    for _ in range(int(iters)):
        _, g = local_objective(w, X, y, anchor, mu, k)
        w -= step * g
    return ModelParams(w, global_params.n_features, k)


def predict(params: ModelParams, X):
    return np.argmax(_augment(X) @ params.matrix(), axis=1)


def accuracy(params: ModelParams, X, y):
    return float(np.mean(predict(params, X) == y))


def smoothness_estimate(X):
    """Upper bound on the Lipschitz constant of the mean softmax loss gradient.

    The softmax Hessian block diag(p) - p p^T is dominated by I/2, so
    lambda_max(Xa^T Xa / n) / 2 bounds the curvature.
    """
    Xa = _augment(X)
    return 0.5 * float(np.linalg.eigvalsh(Xa.T @ Xa / X.shape[0])[-1])


def dissimilarity_estimate(w, datasets, weights, n_classes, eps=1e-12):
    """B such that sum_v p_v ||grad F_v||^2 <= B^2 ||grad f||^2 at ``w``."""
    grads = np.array([cross_entropy(w, d.features, d.labels, n_classes)[1] for d in datasets])
    weights = np.asarray(weights, float)
    g = weights @ grads
    num = float(weights @ np.sum(grads ** 2, axis=1))
    return float(np.sqrt(num / max(g @ g, eps))), float(g @ g)


def inexactness(w_new, data, anchor, mu, n_classes):
    """gamma: ratio of the proximal gradient at the local solution to the
    local loss gradient at the anchor."""
    _, g_new = local_objective(w_new, data.features, data.labels, anchor, mu, n_classes)
    _, g0 = cross_entropy(anchor, data.features, data.labels, n_classes)
    return float(np.linalg.norm(g_new) / max(np.linalg.norm(g0), 1e-12))
