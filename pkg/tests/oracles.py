"""Independent reference computations used only by the tests."""

import itertools

import numpy as np

from kdde.gauss import dphi
from kdde.mixtures import mixture_deriv_batch


def random_spd(rng, d, lo=0.3, hi=2.0):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q @ np.diag(rng.uniform(lo, hi, d)) @ Q.T


def fd_dphi(x, Sigma, r, h=1e-5):
    """``D^{⊗r} φ`` by central differences of ``D^{⊗(r-1)} φ`` (first factor slowest)."""
    x = np.asarray(x, float)
    d = x.size
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((dphi(x + e, Sigma, r - 1) - dphi(x - e, Sigma, r - 1)) / (2 * h))
    return np.concatenate(cols)


def grid(d, lo, hi, m):
    axes = [np.linspace(lo, hi, m)] * d
    pts = np.array(list(itertools.product(*axes)))
    w = ((hi - lo) / (m - 1)) ** d
    return pts, w


def quad_sq_norm(fun, d, lo=-9.0, hi=9.0, m=None):
    """Riemann sum of ``||fun(x)||^2``; spectrally accurate for Gaussian tails."""
    m = m or (3601 if d == 1 else 361)
    pts, w = grid(d, lo, hi, m)
    vals = fun(pts)
    return float(np.sum(vals**2) * w)


def mixture_derivative_field(f, r):
    return lambda pts: mixture_deriv_batch(f, pts, r)
