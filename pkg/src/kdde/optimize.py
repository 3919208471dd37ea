"""Derivative-free minimization over the cone of positive-definite matrices."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .estimator import as_bandwidth

log = logging.getLogger(__name__)


class OptimizerError(RuntimeError):
    """No start produced a finite objective value."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class OptimizerConfig:
    """Nelder-Mead settings.

    ``max_evals=None`` means ``500 * p`` with ``p = d(d+1)/2`` free parameters.
    ``objective_tol`` is relative to ``|objective(init)|``; ``param_tol`` is the
    simplex-size tolerance in log-Cholesky coordinates (a relative change in
    the bandwidth scale).  Each restart shrinks the initial simplex by
    ``restart_shrink``.
    """

    max_evals: int | None = None
    objective_tol: float = 1e-8
    simplex_init_scale: float = 0.25
    restarts: int = 2
    param_tol: float = 1e-4
    restart_shrink: float = 0.2

    def __post_init__(self):
        if min(self.objective_tol, self.simplex_init_scale, self.param_tol, self.restart_shrink) <= 0:
            raise ValueError("tolerances and simplex scale must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")


@dataclass
class PDOptimum:
    H: np.ndarray
    value: float
    init_value: float
    nfev: int
    converged: bool
    improved: bool
    trace: list = field(default_factory=list)


def _tril_param_index(d: int):
    rows, cols = np.tril_indices(d)
    return rows, cols, rows == cols


def pd_optimize(objective: Callable[[np.ndarray], float], init, cfg: OptimizerConfig | None = None) -> PDOptimum:
    """Minimize ``objective(H)`` over symmetric positive-definite ``H``.

    Iterates are ``H = L0 C C' L0'`` where ``L0`` is the Cholesky factor of
    ``init`` and ``C`` is lower triangular with exponentiated diagonal, so
    every simplex vertex is PD and the start is ``C = I``.  Nelder-Mead is
    restarted from the incumbent up to ``cfg.restarts`` times while it keeps
    improving.
    """
    cfg = cfg or OptimizerConfig()
    H0 = as_bandwidth(init, name="initial bandwidth")
    d = H0.shape[0]
    L0 = np.linalg.cholesky(H0)
    rows, cols, diag = _tril_param_index(d)
    npar = rows.size
    budget = cfg.max_evals or 500 * npar

    def unpack(theta):
        C = np.zeros((d, d))
        C[rows, cols] = np.where(diag, np.exp(np.clip(theta, -50, 50)), theta)
        L = L0 @ C
        return L @ L.T

    f0 = float(objective(H0))
    if not np.isfinite(f0):
        raise OptimizerError("objective is not finite at the initial bandwidth")
    scale = abs(f0) if f0 != 0 else 1.0

    def scaled(theta):
        v = objective(unpack(theta))
        return float(v) / scale if np.isfinite(v) else np.inf

    best = np.zeros(npar)
    fbest = f0 / scale
    nfev = 1
    converged = False
    trace = []
    for attempt in range(cfg.restarts + 1):
        remaining = budget - nfev
        if remaining <= npar + 1:
            break
        step = cfg.simplex_init_scale * cfg.restart_shrink**attempt
        simplex = np.vstack([best, best + step * np.eye(npar)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                scaled,
                best,
                method="Nelder-Mead",
                options=dict(
                    maxfev=remaining,
                    xatol=cfg.param_tol,
                    fatol=cfg.objective_tol,
                    initial_simplex=simplex,
                ),
            )
        nfev += res.nfev
        trace.append((attempt, float(res.fun) * scale, int(res.nfev)))
        gain = fbest - res.fun
        if res.fun < fbest:
            best, fbest = res.x, float(res.fun)
        converged = bool(res.success)
        if gain <= cfg.objective_tol * max(1.0, abs(fbest)):
            break
    improved = fbest < f0 / scale
    if not improved:
        log.warning("pd_optimize: no improvement over the initial bandwidth after %d evaluations", nfev)
    H = unpack(best) if improved else H0
    return PDOptimum(0.5 * (H + H.T), fbest * scale if improved else f0, f0, nfev, converged, improved, trace)


def multistart(objective, starts, cfg: OptimizerConfig | None = None) -> PDOptimum:
    """Run :func:`pd_optimize` from each start; lowest value wins, ties by smallest trace."""
    results = []
    errors = []
    for H0 in starts:
        try:
            results.append(pd_optimize(objective, H0, cfg))
        except OptimizerError as exc:
            errors.append(str(exc))
    if not results:
        raise OptimizerError("all starts failed", errors)
    best = min(results, key=lambda o: (o.value, float(np.trace(o.H))))
    best.nfev = sum(o.nfev for o in results)
    best.trace = [t for o in results for t in o.trace]
    return best
