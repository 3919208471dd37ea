"""Mean-shift modal clustering with an unconstrained bandwidth matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .estimator import TILE_ENTRIES, as_bandwidth, as_data
from .gauss import log_normal_const
from .selectors import SelectorConfig, select

log = logging.getLogger(__name__)

#: Relative density decrease along a path that is reported as a violation.
MONOTONE_RTOL = 1e-12
MAX_CORRECTIONS = 20


@dataclass
class MeanShiftConfig:
    """Mean-shift settings.

    ``tol`` and ``merge_radius`` are measured in the Mahalanobis metric of
    ``H``, so both are scale free.
    """

    H: np.ndarray
    tol: float = 1e-6
    max_iter: int = 400
    merge_radius: float = 0.1
    alpha_pct: float = 5.0

    def __post_init__(self):
        self.H = as_bandwidth(self.H)
        if self.tol <= 0 or self.merge_radius <= 0:
            raise ValueError("tol and merge_radius must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class Partition:
    labels: np.ndarray
    modes: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    mode_log_density: np.ndarray
    H: np.ndarray
    trajectories: list | None = None
    monotone_violations: int = 0
    corrections: int = 0
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_clusters(self) -> int:
        return len(self.modes)


class _Kernel:
    """Gaussian weights of a fixed sample in the metric of ``H``."""

    def __init__(self, data, H):
        self.X = as_data(data)
        self.H = as_bandwidth(H, self.X.shape[1])
        self.L = np.linalg.cholesky(self.H)
        self.Z = self._whiten(self.X)
        self.log_const = log_normal_const(self.H) - np.log(self.X.shape[0])

    def _whiten(self, Y):
        return np.linalg.solve(self.L, np.atleast_2d(Y).T).T

    def step(self, Y):
        """Return the shifted points and ``log f̂`` at the input points."""
        Y = np.atleast_2d(Y)
        n = self.X.shape[0]
        out = np.empty_like(Y)
        logf = np.empty(Y.shape[0])
        rows = max(1, TILE_ENTRIES // max(1, n * Y.shape[1]))
        for s in range(0, Y.shape[0], rows):
            Zy = self._whiten(Y[s : s + rows])
            q = ((Zy[:, None, :] - self.Z[None, :, :]) ** 2).sum(axis=2)
            logw = -0.5 * q
            lse = logsumexp(logw, axis=1, keepdims=True)
            w = np.exp(logw - lse)
            out[s : s + rows] = w @ self.X
            logf[s : s + rows] = lse[:, 0] + self.log_const
        return out, logf

    def log_density(self, Y):
        return self.step(Y)[1]

    def dist(self, A, B):
        return np.linalg.norm(self._whiten(A) - self._whiten(B), axis=1)


def mean_shift_step(y, data, H) -> np.ndarray:
    """``Σ X_i w_i / Σ w_i`` with ``w_i = exp(-½ (y-X_i)' H^{-1} (y-X_i))``."""
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return _Kernel(data, H).step(y)[0][0]


def _run_paths(kernel: _Kernel, Y0, cfg: MeanShiftConfig, keep_paths: bool = False):
    Y = np.array(np.atleast_2d(Y0), dtype=float)
    m = Y.shape[0]
    iters = np.zeros(m, dtype=int)
    done = np.zeros(m, dtype=bool)
    prev_logf = np.full(m, -np.inf)
    violations = 0
    paths = [[y.copy()] for y in Y] if keep_paths else None
    for _ in range(cfg.max_iter):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        new, logf = kernel.step(Y[active])
        # the density at the current iterate must not fall below the previous one
        drop = prev_logf[active] - logf
        bad = drop > MONOTONE_RTOL * np.maximum(1.0, np.abs(logf))
        if bad.any():
            violations += int(bad.sum())
            log.warning("mean shift: density decreased along %d path(s)", int(bad.sum()))
        prev_logf[active] = logf
        moved = kernel.dist(new, Y[active])
        Y[active] = new
        iters[active] += 1
        if keep_paths:
            for k, i in enumerate(active):
                paths[i].append(new[k].copy())
        done[active[moved < cfg.tol]] = True
    return Y, iters, done, violations, paths


def mean_shift_path(y0, data, cfg: MeanShiftConfig):
    """Iterate mean-shift steps from ``y0``.

    Returns ``(mode, path, converged)``; ``path`` starts at ``y0``.  On hitting
    ``max_iter`` the last iterate is returned with ``converged=False``.
    """
    kernel = _Kernel(data, cfg.H)
    Y, _, done, _, paths = _run_paths(kernel, np.asarray(y0, float).reshape(1, -1), cfg, True)
    return Y[0], np.array(paths[0]), bool(done[0])


def path_log_density(path, data, H) -> np.ndarray:
    """``log f̂_H`` at each point of a path (for ascent checks)."""
    return _Kernel(data, H).log_density(np.atleast_2d(path))


def _merge(kernel: _Kernel, T: np.ndarray, logf: np.ndarray, radius: float):
    """Single-linkage grouping of terminal points in the ``H`` metric."""
    Z = kernel._whiten(T)
    pairs = cKDTree(Z).query_pairs(radius, output_type="ndarray")
    m = T.shape[0]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m)) if len(pairs) else coo_matrix((m, m))
    ngroups, comp = connected_components(graph, directed=False)
    reps = []
    for g in range(ngroups):
        idx = np.flatnonzero(comp == g)
        reps.append(idx[np.argmax(logf[idx])])
    reps = np.array(reps)
    sizes = np.bincount(comp, minlength=ngroups)
    modes = T[reps]
    # deterministic labels: larger groups first, ties by mode coordinates
    order = sorted(range(ngroups), key=lambda g: (-sizes[g], *modes[g]))
    relabel = np.empty(ngroups, dtype=int)
    relabel[order] = np.arange(ngroups)
    return relabel[comp], modes[order], logf[reps][order]


def cluster(data, cfg: MeanShiftConfig, keep_paths: bool = False) -> Partition:
    """Run mean shift from every observation and group the limits."""
    X = as_data(data)
    kernel = _Kernel(X, cfg.H)
    T, iters, done, viol, paths = _run_paths(kernel, X, cfg, keep_paths)
    logf = kernel.log_density(T)
    labels, modes, mode_logf = _merge(kernel, T, logf, cfg.merge_radius)
    return Partition(labels, modes, iters, done, mode_logf, kernel.H, paths, viol)


def _assign(kernel: _Kernel, part: Partition, Y, cfg: MeanShiftConfig):
    T, iters, done, viol, _ = _run_paths(kernel, Y, cfg)
    Zm = kernel._whiten(part.modes)
    Zt = kernel._whiten(T)
    d2 = ((Zt[:, None, :] - Zm[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1), iters, done, viol


def correct_insignificant(data, cfg: MeanShiftConfig, selector: SelectorConfig | None = None) -> Partition:
    """Mean-shift clustering with removal of groups below ``alpha_pct`` % of the largest.

    Small groups are left out, the bandwidth is reselected on the retained
    points, the retained points are reclustered, and the process repeats.
    Left-out points are finally sent along mean-shift paths of the last
    estimate and join the cluster whose mode their path reaches.
    """
    if not 0 < cfg.alpha_pct < 100:
        raise ValueError("alpha_pct must lie in (0, 100)")
    selector = selector or SelectorConfig(method="pi", r=1)
    X = as_data(data)
    n = X.shape[0]
    keep = np.arange(n)
    cur = cfg
    part = cluster(X, cur)
    rounds = 0
    while True:
        sizes = np.bincount(part.labels)
        small = sizes < cfg.alpha_pct / 100.0 * sizes.max()
        if not small.any():
            break
        if rounds == MAX_CORRECTIONS:
            log.warning("insignificant-group correction stopped after %d rounds", MAX_CORRECTIONS)
            break
        rounds += 1
        keep = keep[~small[part.labels]]
        if keep.size < max(3, X.shape[1] + 2):
            log.warning("correction left too few points; returning a single cluster")
            return _single_cluster(X, cfg, rounds)
        H = select(X[keep], selector).H
        cur = replace(cfg, H=H)
        part = cluster(X[keep], cur)
    if keep.size == n:
        part.corrections = rounds
        return part
    kernel = _Kernel(X[keep], cur.H)
    dropped = np.setdiff1d(np.arange(n), keep)
    lab, it, done, viol = _assign(kernel, part, X[dropped], cur)
    labels = np.empty(n, dtype=int)
    labels[keep] = part.labels
    labels[dropped] = lab
    iters = np.empty(n, dtype=int)
    iters[keep] = part.iterations
    iters[dropped] = it
    conv = np.empty(n, dtype=bool)
    conv[keep] = part.converged
    conv[dropped] = done
    return Partition(labels, part.modes, iters, conv, part.mode_log_density, cur.H, None,
                     part.monotone_violations + viol, rounds, dropped)


def _single_cluster(X, cfg, rounds):
    kernel = _Kernel(X, cfg.H)
    logf = kernel.log_density(X)
    top = int(np.argmax(logf))
    n = X.shape[0]
    return Partition(np.zeros(n, dtype=int), X[top : top + 1], np.zeros(n, dtype=int),
                     np.ones(n, dtype=bool), logf[top : top + 1], kernel.H, corrections=rounds)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    a = np.asarray(labels_a).reshape(-1)
    b = np.asarray(labels_b).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"label vectors differ in length ({a.size} vs {b.size})")
    if a.size < 2:
        raise ValueError("need at least two labels")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def comb2(x):
        x = np.asarray(x, dtype=float)
        return float((x * (x - 1) / 2).sum())

    index = comb2(table)
    sa, sb = comb2(table.sum(axis=1)), comb2(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2
    expected = sa * sb / total
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)
