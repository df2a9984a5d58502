import numpy as np


def check_gradient(fun, grad, x, h=1e-5, directions=None, rng=None):
    """Largest relative error between ``grad`` and central differences of ``fun``.

    Compares along coordinate directions when ``directions`` is None (cheap
    for small problems) or along that many random unit directions otherwise.
    Relative errors use max(1, |analytic|) in the denominator.
    """
    x = np.asarray(x, float)
    g = np.asarray(grad(x), float)
    if directions is None:
        dirs = np.eye(x.size)
    else:
        rng = np.random.default_rng(rng)
        dirs = rng.normal(size=(directions, x.size))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    worst = 0.0
    for d in dirs:
        num = (fun(x + h * d) - fun(x - h * d)) / (2 * h)
        ana = g @ d
        worst = max(worst, abs(num - ana) / max(1.0, abs(ana)))
    return worst
