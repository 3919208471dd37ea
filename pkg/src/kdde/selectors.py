"""Bandwidth selectors for kernel density derivative estimation.

All criteria use the normal kernel and are written in terms of the scalar
Gaussian functionals of :mod:`kdde.gauss`, so no ``d**r`` vector is ever
formed during selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import PairwiseDifferences, as_bandwidth, as_data
from .gauss import EtaSeries, nu
from .optimize import OptimizerConfig, OptimizerError, PDOptimum, multistart, pd_optimize
from .tensor import odd_factorial

METHODS = ("nr", "cv", "pi", "scv")


class SelectorError(RuntimeError):
    """A selector could not produce a bandwidth."""


@dataclass
class SelectorConfig:
    method: str = "pi"
    r: int = 0
    stages: int = 2
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    prescale: bool = True

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS + ("or",):
            raise ValueError(f"unknown selector {self.method!r}")
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if self.r < 0:
            raise ValueError("r must be nonnegative")


@dataclass
class SelectorResult:
    H: np.ndarray
    criterion_value: float
    method: str
    r: int
    pilots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def _pairs(data) -> PairwiseDifferences:
    return data if isinstance(data, PairwiseDifferences) else PairwiseDifferences(as_data(data))


def sample_covariance(X) -> np.ndarray:
    X = as_data(X)
    n, d = X.shape
    if n < d + 1:
        raise SelectorError(f"need at least d+1 = {d + 1} observations, got {n}")
    S = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    if np.linalg.matrix_rank(S) < d or np.linalg.eigvalsh(S)[0] <= 0:
        raise SelectorError("sample covariance is singular; remove collinear columns or add jitter")
    return S


def normal_reference(S, n: int, r: int) -> np.ndarray:
    """``[4/(d+2r+2)]^{2/(d+2r+4)} S n^{-2/(d+2r+4)}``."""
    S = np.atleast_2d(S)
    d = S.shape[0]
    e = 2.0 / (d + 2 * r + 4)
    return (4.0 / (d + 2 * r + 2)) ** e * S * n ** (-e)


def normal_reference_pilot(S, n: int, order: int) -> np.ndarray:
    """Normal-reference pilot for estimating ``ψ_order`` (``order`` even).

    ``(2/(order+d))^{2/(order+d+2)} 2S n^{-2/(order+d+2)}``.
    """
    S = np.atleast_2d(S)
    d = S.shape[0]
    e = 2.0 / (order + d + 2)
    return (2.0 / (order + d)) ** e * 2.0 * S * n ** (-e)


def nr_bandwidth(data, r: int) -> np.ndarray:
    X = as_data(data)
    return normal_reference(sample_covariance(X), X.shape[0], r)


def variance_term(H, n: int, r: int) -> float:
    """``n^{-1}|H|^{-1/2} tr((H^{-1})^{⊗r} R(D^{⊗r}φ))``.

    Written as ``n^{-1}|H|^{-1/2} 2^{-(d+r)} π^{-d/2} E[(Z'H^{-1}Z)^r]``; the
    moment is ``nu(H, r)``.
    """
    H = np.atleast_2d(H)
    d = H.shape[0]
    return float(
        np.linalg.det(H) ** -0.5 * 2.0 ** (-(d + r)) * math.pi ** (-d / 2) * nu(H, r) / n
    )


def _eye(d):
    return np.eye(d)


def cv_criterion(data, H, r: int) -> float:
    """``(-1)^r {n^{-2} Σ_{i,j} η_{2r}(X_i-X_j; 2H) - 2[n(n-1)]^{-1} Σ_{i≠j} η_{2r}(X_i-X_j; H)}``."""
    P = _pairs(data)
    n, d = P.n, P.d
    if n < 2:
        raise ValueError("cv_criterion needs n >= 2")
    H = as_bandwidth(H, d)
    I = _eye(d)
    first = P.full_sum(EtaSeries(I, I, 2.0 * H, r, 0)) / n**2
    second = P.offdiag_sum(EtaSeries(I, I, H, r, 0)) * 2.0 / (n * (n - 1))
    return (-1) ** r * (first - second)


def pi_criterion(data, H, r: int, G) -> float:
    """Plug-in criterion with ``ψ_{2r+4}`` estimated at pilot ``G``.

    ``variance_term + (-1)^r (2n)^{-2} Σ_{i,j} η_{4,2r}(X_i - X_j; H, I, G)``.
    The pair sum runs through weighted moments, since ``G`` stays fixed while
    ``H`` is optimized.
    """
    P = _pairs(data)
    n, d = P.n, P.d
    H = as_bandwidth(H, d)
    G = as_bandwidth(G, d, "pilot")
    bias = P.full_sum(EtaSeries(H, _eye(d), G, 2, r), moments=True) / (4.0 * n**2)
    return variance_term(H, n, r) + (-1) ** r * bias


def scv_criterion(data, H, G, r: int, diagonal: bool = True) -> float:
    """Smoothed cross-validation criterion with pilot ``G``.

    ``variance_term + (-1)^r n^{-2} Σ [η_{2r}(·; 2H+2G) - 2η_{2r}(·; H+2G) + η_{2r}(·; 2G)]``.
    ``diagonal=False`` drops the ``i = j`` terms.
    """
    P = _pairs(data)
    n, d = P.n, P.d
    H = as_bandwidth(H, d)
    G = as_bandwidth(G, d, "pilot")
    I = _eye(d)
    total = 0.0
    for coef, cov in ((1.0, 2 * H + 2 * G), (-2.0, H + 2 * G), (1.0, 2 * G)):
        ser = EtaSeries(I, I, cov, r, 0)
        total += coef * (P.full_sum(ser) if diagonal else P.offdiag_sum(ser))
    return variance_term(H, n, r) + (-1) ** r * total / n**2


def pilot_terms(data, G, k: int, r: int, G_next) -> tuple[float, float, float]:
    """The three terms of the plug-in stage-``k`` pilot objective.

    With ``p = r + k + 1``:

    * ``n^{-2} |G|^{-1} (2π)^{-d} OF(2p) E[(Z'G^{-2}Z)^p]``
    * ``(-1)^p (2π)^{-d/2} OF(2p) |G|^{-1/2} n^{-3} Σ η_{2,2p}(X_i-X_j; G, G^{-1}, G_next)``
    * ``¼ n^{-4} [Σ η_{2,2p}(X_i-X_j; G, I, G_next)]²``
    """
    P = _pairs(data)
    n, d = P.n, P.d
    G = as_bandwidth(G, d, "pilot")
    G_next = as_bandwidth(G_next, d, "next-stage pilot")
    p = r + k + 1
    of = odd_factorial(2 * p)
    detG = np.linalg.det(G)
    Ginv = np.linalg.inv(G)
    t1 = of * nu(G @ G, p) / (n**2 * detG * (2 * math.pi) ** d)
    cross = P.full_sum(EtaSeries(G, Ginv, G_next, 1, p), moments=True)
    t2 = (-1) ** p * (2 * math.pi) ** (-d / 2) * of * detG**-0.5 * cross / n**3
    lin = P.full_sum(EtaSeries(G, _eye(d), G_next, 1, p), moments=True)
    t3 = 0.25 * lin**2 / n**4
    return t1, t2, t3


def scv_pilot_factors(d: int) -> tuple[float, float, float]:
    """Termwise multipliers turning the plug-in pilot objective into the SCV one."""
    return 2.0 ** (-d), 2.0 ** (-d / 2 + 1), 4.0


def pi_pilot_objective(data, G, k: int, r: int, G_next, scv: bool = False) -> float:
    """Estimated squared norm of the asymptotic bias of ``ψ̂_{2r+2k+2}(G)``."""
    terms = pilot_terms(data, G, k, r, G_next)
    if scv:
        d = np.atleast_2d(G).shape[0]
        terms = [a * b for a, b in zip(terms, scv_pilot_factors(d))]
    return float(sum(terms))


# -- selectors ------------------------------------------------------------------

def _prescaler(X: np.ndarray, prescale: bool):
    if not prescale:
        return X, np.ones(X.shape[1])
    sd = X.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise SelectorError("a data column has zero variance")
    return X / sd, sd


def _backscale(M, sd):
    return M * np.outer(sd, sd)


def _starts(H_nr):
    return [H_nr, 0.5 * H_nr, 2.0 * H_nr]


def _optimize(objective, starts, cfg, what):
    try:
        return multistart(objective, starts, cfg)
    except OptimizerError as exc:
        raise SelectorError(f"{what}: {exc}") from exc


def _finish(opt: PDOptimum, method, r, sd, pilots=(), extra=None) -> SelectorResult:
    diag = dict(nfev=opt.nfev, converged=opt.converged, improved=opt.improved,
                init_value=opt.init_value)
    if extra:
        diag.update(extra)
    return SelectorResult(
        _backscale(opt.H, sd), opt.value, method, r, [_backscale(G, sd) for G in pilots], diag
    )


def cv_select(data, r: int, cfg: OptimizerConfig | None = None, prescale: bool = True) -> SelectorResult:
    """Minimize the cross-validation criterion from NR, NR/2 and 2NR."""
    X = as_data(data)
    sample_covariance(X)
    Xs, sd = _prescaler(X, prescale)
    P = PairwiseDifferences(Xs)
    H_nr = nr_bandwidth(Xs, r)
    opt = _optimize(lambda H: cv_criterion(P, H, r), _starts(H_nr), cfg, "CV")
    return _finish(opt, "cv", r, sd)


def select_pilots(P: PairwiseDifferences, S, r: int, stages: int, cfg, scv: bool = False) -> list:
    """Pilots ``[G_{2r+2m+2}, ..., G_{2r+4}]`` of the ``m``-stage algorithm."""
    n = P.n
    G = normal_reference_pilot(S, n, 2 * r + 2 * stages + 2)
    pilots = [G]
    for k in range(stages - 1, 0, -1):
        init = normal_reference_pilot(S, n, 2 * r + 2 * k + 2)
        G_next = G
        try:
            opt = pd_optimize(lambda Gc: pi_pilot_objective(P, Gc, k, r, G_next, scv), init, cfg)
        except OptimizerError as exc:
            raise SelectorError(f"pilot stage k={k}: {exc}") from exc
        G = opt.H
        pilots.append(G)
    return pilots


def pi_select(data, r: int, m: int = 2, cfg: OptimizerConfig | None = None, prescale: bool = True) -> SelectorResult:
    """``m``-stage plug-in selector."""
    X = as_data(data)
    sample_covariance(X)
    Xs, sd = _prescaler(X, prescale)
    P = PairwiseDifferences(Xs)
    S = sample_covariance(Xs)
    pilots = select_pilots(P, S, r, m, cfg)
    G = pilots[-1]
    opt = _optimize(lambda H: pi_criterion(P, H, r, G), _starts(normal_reference(S, P.n, r)), cfg, "PI")
    return _finish(opt, "pi", r, sd, pilots)


def scv_select(data, r: int, m: int = 2, cfg: OptimizerConfig | None = None, prescale: bool = True) -> SelectorResult:
    """``m``-stage smoothed cross-validation selector."""
    X = as_data(data)
    sample_covariance(X)
    Xs, sd = _prescaler(X, prescale)
    P = PairwiseDifferences(Xs)
    S = sample_covariance(Xs)
    pilots = select_pilots(P, S, r, m, cfg, scv=True)
    G = pilots[-1]
    opt = _optimize(lambda H: scv_criterion(P, H, G, r), _starts(normal_reference(S, P.n, r)), cfg, "SCV")
    return _finish(opt, "scv", r, sd, pilots)


def nr_select(data, r: int) -> SelectorResult:
    return SelectorResult(nr_bandwidth(data, r), float("nan"), "nr", r)


def select(data, cfg: SelectorConfig) -> SelectorResult:
    """Dispatch on ``cfg.method`` (``nr``, ``cv``, ``pi``, ``scv``)."""
    if cfg.method == "nr":
        return nr_select(data, cfg.r)
    if cfg.method == "cv":
        return cv_select(data, cfg.r, cfg.optimizer, cfg.prescale)
    if cfg.method == "pi":
        return pi_select(data, cfg.r, cfg.stages, cfg.optimizer, cfg.prescale)
    if cfg.method == "scv":
        return scv_select(data, cfg.r, cfg.stages, cfg.optimizer, cfg.prescale)
    raise SelectorError("the oracle selector needs the target density; use kdde.mise.oracle_bandwidth")
