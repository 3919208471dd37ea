"""Kernel estimators of density derivatives with unconstrained bandwidths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gauss import EtaSeries, dphi_batch, monomial_exponents, quad_monomials
from .tensor import as_spd

#: Budget (in float64 entries) for one tile of pairwise work.
TILE_ENTRIES = 4_000_000
#: Rows per chunk when accumulating weighted monomial moments.
MOMENT_CHUNK = 1 << 15


def as_bandwidth(H, d: int | None = None, name: str = "bandwidth") -> np.ndarray:
    """Validate a bandwidth matrix: symmetric within 1e-10 and positive definite."""
    H = as_spd(np.atleast_2d(np.asarray(H, dtype=float)), name)
    if d is not None and H.shape != (d, d):
        raise ValueError(f"{name} must be {d}x{d}, got {H.shape[0]}x{H.shape[1]}")
    return H


def as_data(data) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError("data must be an n x d array")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contain non-finite values")
    return X


def _fsum_rows(parts: list[np.ndarray]) -> np.ndarray:
    """Order-fixed compensated merge of per-tile partial sums."""
    stacked = np.asarray(parts, dtype=float)
    if stacked.ndim == 1:
        return np.asarray(math.fsum(stacked))
    return np.array([math.fsum(col) for col in stacked.reshape(len(parts), -1).T]).reshape(
        stacked.shape[1:]
    )


@dataclass
class KdeModel:
    """Kernel estimator of ``D^{⊗r} f`` with Gaussian kernel and bandwidth ``H``."""

    data: np.ndarray
    H: np.ndarray
    r: int = 0

    def __post_init__(self):
        self.data = as_data(self.data)
        self.H = as_bandwidth(self.H, self.data.shape[1])
        if self.r < 0:
            raise ValueError("r must be nonnegative")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def kde_grid(model: KdeModel, points) -> np.ndarray:
    """Evaluate ``D^{⊗r} f̂_H`` at each row of ``points``; shape ``(m, d**r)``."""
    d, r = model.d, model.r
    Y = np.asarray(points, dtype=float).reshape(-1, d)
    X = model.data
    width = d**r
    out = np.zeros((Y.shape[0], width))
    rows = max(1, TILE_ENTRIES // max(1, X.shape[0] * width))
    for start in range(0, Y.shape[0], rows):
        block = Y[start : start + rows]
        diffs = (block[:, None, :] - X[None, :, :]).reshape(-1, d)
        vals = dphi_batch(diffs, model.H, r).reshape(block.shape[0], X.shape[0], width)
        out[start : start + rows] = vals.mean(axis=1)
    return out


def kde_deriv(model: KdeModel, x) -> np.ndarray:
    """``D^{⊗r} f̂_H(x) = n^{-1} Σ_i D^{⊗r} φ_H(x - X_i)`` at a single point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.d:
        raise ValueError(f"point has dimension {x.size}, expected {model.d}")
    return kde_grid(model, x[None, :])[0]


def kde(data, H, points) -> np.ndarray:
    """Plain density estimate at each row of ``points``."""
    return kde_grid(KdeModel(data, H, 0), points)[:, 0]


def psi_hat(data, G, r: int) -> np.ndarray:
    """``ψ̂_{2r}(G) = n^{-2} Σ_{i,j} D^{⊗2r} φ_G(X_i - X_j)``, diagonal included."""
    X = as_data(data)
    if X.shape[0] < 2:
        raise ValueError("psi_hat needs n >= 2")
    return pairwise_deriv_sum(X, G, 2 * r) / X.shape[0] ** 2


def pairwise_deriv_sum(data, G, order: int) -> np.ndarray:
    """``Σ_{i,j} D^{⊗order} φ_G(X_i - X_j)`` over all ordered pairs."""
    X = as_data(data)
    n, d = X.shape
    G = as_bandwidth(G, d)
    width = d**order
    rows = max(1, TILE_ENTRIES // max(1, n * width))
    parts = []
    for start in range(0, n, rows):
        block = X[start : start + rows]
        diffs = (block[:, None, :] - X[None, :, :]).reshape(-1, d)
        parts.append(dphi_batch(diffs, G, order).sum(axis=0))
    return _fsum_rows(parts)


@dataclass
class PairwiseDifferences:
    """Differences ``X_i - X_j`` (i < j) of a fixed sample, kept as quadratic monomials.

    All even-order Gaussian functionals of the differences depend on them only
    through quadratic forms, so the monomials are computed once and reused by
    every criterion evaluation.  Storage is tiled; tiles beyond ``cache_entries``
    are regenerated on demand.
    """

    data: np.ndarray
    cache_entries: int = 20_000_000
    _tiles: list | None = field(default=None, init=False, repr=False)
    _moments: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        X = as_data(self.data)
        # canonical row order makes every sum invariant to input row order
        self.data = X[np.lexsort(X.T[::-1])]
        n, d = self.data.shape
        self.n, self.d = n, d
        nmon = d * (d + 1) // 2
        total = n * (n - 1) // 2 * nmon
        self._row_block = max(1, TILE_ENTRIES // max(1, n * nmon))
        if total <= self.cache_entries:
            self._tiles = list(self._generate())

    def _generate(self):
        X = self.data
        n = self.n
        for start in range(0, n - 1, self._row_block):
            stop = min(n - 1, start + self._row_block)
            chunks = [X[i] - X[i + 1 :] for i in range(start, stop)]
            yield quad_monomials(np.concatenate(chunks, axis=0))

    def tiles(self):
        return iter(self._tiles) if self._tiles is not None else self._generate()

    def offdiag_sum(self, series: EtaSeries, moments: bool = False) -> float:
        """``Σ_{i≠j} η(X_i - X_j)`` for an even function ``η``.

        ``moments=True`` contracts the polynomial form of ``η`` with cached
        Gaussian-weighted monomial moments; worthwhile when many evaluations
        share the covariance ``series.Sigma``.
        """
        if moments:
            return self._moment_sum(series)
        parts = [float(np.sum(series.from_monomials(t))) for t in self.tiles()]
        return 2.0 * math.fsum(parts)

    def full_sum(self, series: EtaSeries, moments: bool = False) -> float:
        """``Σ_{i,j} η(X_i - X_j)`` including the ``n`` diagonal terms."""
        return self.offdiag_sum(series, moments) + self.n * series.at_zero()

    def weighted_moments(self, Sigma, degree: int) -> dict:
        """``Σ_{i<j} φ_Σ(X_i - X_j) m(X_i - X_j)^α`` for all ``|α| <= degree``.

        ``m`` is the vector of quadratic monomials.  Results are cached per
        covariance (a handful of entries).
        """
        Sigma = np.asarray(Sigma, dtype=float)
        key = Sigma.tobytes()
        hit = self._moments.get(key)
        if hit is not None and hit[0] >= degree:
            return hit[1]
        K = self.d * (self.d + 1) // 2
        exps = monomial_exponents(K, degree)
        base = EtaSeries(np.eye(self.d), np.eye(self.d), Sigma, 0, 0)
        parts: dict = {e: [] for e in exps}
        for tile in self.tiles():
            for start in range(0, tile.shape[0], MOMENT_CHUNK):
                mono = tile[start : start + MOMENT_CHUNK]
                level = {exps[0]: base.from_monomials(mono)}
                parts[exps[0]].append(float(level[exps[0]].sum()))
                for _ in range(degree):
                    nxt = {}
                    for e, v in level.items():
                        last = max([k for k in range(K) if e[k]] or [0])
                        for k in range(last, K):
                            f = e[:k] + (e[k] + 1,) + e[k + 1 :]
                            if f not in nxt:
                                nxt[f] = v * mono[:, k]
                                parts[f].append(float(nxt[f].sum()))
                    level = nxt
        out = {e: math.fsum(parts[e]) for e in exps}
        if len(self._moments) >= 4:
            self._moments.pop(next(iter(self._moments)))
        self._moments[key] = (degree, out)
        return out

    def _moment_sum(self, series: EtaSeries) -> float:
        if self.n < 2:
            return 0.0
        poly = series.polynomial()
        mom = self.weighted_moments(series.Sigma, series.degree)
        total = math.fsum(c * mom[e] for e, c in poly.items())
        return 2.0 * series.sign_fact * total
