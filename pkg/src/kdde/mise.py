"""Exact and asymptotic error criteria for normal-mixture targets, and the oracle bandwidth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimator import KdeModel, PairwiseDifferences, as_bandwidth
from .gauss import EtaSeries
from .mixtures import NormalMixture, component_pair_sum, psi_exact
from .optimize import OptimizerConfig, OptimizerError, pd_optimize
from .selectors import normal_reference, variance_term
from .tensor import kron, kron_power, vec


@dataclass
class ErrorReport:
    r: int
    n: int
    H: np.ndarray
    ise: float | None = None
    mise: float | None = None
    amise: float | None = None


@dataclass
class MiseTerms:
    """Integrated variance / integrated squared bias split of the exact MISE."""

    iv: float
    isb: float

    @property
    def total(self) -> float:
        return self.iv + self.isb


def _trace_term(f: NormalMixture, extra, r: int) -> float:
    """``(-1)^r Σ_{i,j} w_i w_j η_{2r}(μ_i - μ_j; Σ_i + Σ_j + extra)``."""
    I = np.eye(f.d)
    return (-1) ** r * component_pair_sum(f, f, extra, I, I, r, 0)


def integrated_sq_deriv(f: NormalMixture, r: int) -> float:
    """``tr R(D^{⊗r} f) = ∫ ||D^{⊗r} f||^2``."""
    return _trace_term(f, np.zeros((f.d, f.d)), r)


def mise_terms(f: NormalMixture, H, n: int, r: int) -> MiseTerms:
    H = as_bandwidth(H, f.d)
    if n < 1:
        raise ValueError("n must be positive")
    t2h = _trace_term(f, 2 * H, r)
    th = _trace_term(f, H, r)
    t0 = integrated_sq_deriv(f, r)
    iv = variance_term(H, n, r) - t2h / n
    isb = t2h - 2 * th + t0
    return MiseTerms(iv, isb)


def exact_mise(f: NormalMixture, H, n: int, r: int) -> float:
    """Exact ``MISE_r(H)`` of the Gaussian-kernel estimator for a normal-mixture target."""
    return mise_terms(f, H, n, r).total


def amise(f: NormalMixture, H, n: int, r: int) -> float:
    """``AMISE_r(H)`` with ``ψ_{2r+4}`` contracted against ``vec I_{d^r} ⊗ (vec H)^{⊗2}``."""
    H = as_bandwidth(H, f.d)
    d = f.d
    psi = psi_exact(f, r + 2)
    contraction = kron(vec(np.eye(d**r)), kron_power(vec(H)[:, None], 2)).reshape(-1)
    return variance_term(H, n, r) + (-1) ** r * 0.25 * float(psi @ contraction)


def amise_eta(f: NormalMixture, H, n: int, r: int) -> float:
    """AMISE through ``η_{4,2r}``; same value as :func:`amise` without forming ψ."""
    H = as_bandwidth(H, f.d)
    zero = np.zeros((f.d, f.d))
    bias = component_pair_sum(f, f, zero, H, np.eye(f.d), 2, r)
    return variance_term(H, n, r) + (-1) ** r * 0.25 * bias


def ise(model: KdeModel, f: NormalMixture) -> float:
    """``∫ ||D^{⊗r} f̂_H - D^{⊗r} f||^2`` in closed form."""
    if model.d != f.d:
        raise ValueError("estimator and target dimensions differ")
    X, H, r, n, d = model.data, model.H, model.r, model.n, model.d
    I = np.eye(d)
    sign = (-1) ** r
    dd = PairwiseDifferences(X).full_sum(EtaSeries(I, I, 2 * H, r, 0)) / n**2
    parts = []
    for w, mu, S in zip(f.weights, f.means, f.covs):
        vals = EtaSeries(I, I, H + S, r, 0)(X - mu)
        parts.append(w * math.fsum(vals))
    dc = math.fsum(parts) / n
    cc = integrated_sq_deriv(f, r)
    return max(0.0, sign * dd - 2 * sign * dc + cc)


def oracle_bandwidth(f: NormalMixture, n: int, r: int, cfg: OptimizerConfig | None = None):
    """Minimizer of :func:`exact_mise`, started from the normal-reference bandwidth.

    Returns ``(H, diagnostics)``; diagnostics carry the MISE value, evaluation
    count and a finite-difference gradient norm at the solution in the
    optimizer's log-Cholesky coordinates.
    """
    cfg = cfg or OptimizerConfig(objective_tol=1e-10, param_tol=1e-7, restarts=4)
    H0 = normal_reference(f.covariance(), n, r)
    try:
        opt = pd_optimize(lambda H: exact_mise(f, H, n, r), H0, cfg)
    except OptimizerError as exc:
        raise OptimizerError(f"oracle bandwidth: {exc}", [H0]) from exc
    return opt.H, dict(mise=opt.value, nfev=opt.nfev, converged=opt.converged,
                       grad_norm=_grad_norm(lambda H: exact_mise(f, H, n, r), opt.H))


def _grad_norm(fun, H, h=1e-5) -> float:
    L = np.linalg.cholesky(H)
    rows, cols = np.tril_indices(H.shape[0])
    f0 = fun(H)
    g = []
    for i, j in zip(rows, cols):
        E = np.zeros_like(L)
        E[i, j] = h * (L[i, j] if i == j else 1.0)
        Lp, Lm = L + E, L - E
        g.append((fun(Lp @ Lp.T) - fun(Lm @ Lm.T)) / (2 * h))
    return float(np.linalg.norm(g) / max(abs(f0), np.finfo(float).tiny))
