import numpy as np
import pytest


def fd_gradient(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. array ``x``.

    ``x`` is perturbed in place, so ``f`` must read it on every call.
    """
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_err(a, b):
    """Relative error between arrays, guarded for tiny denominators."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
