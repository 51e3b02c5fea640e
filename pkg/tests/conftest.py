import numpy as np
import pytest


def random_spd(rng, d, floor=0.5):
    A = rng.standard_normal((d, d))
    return A @ A.T + floor * np.eye(d)


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        gf[i] = (up - down) / (2 * step)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
