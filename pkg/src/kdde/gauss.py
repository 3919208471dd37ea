"""Derivatives of multivariate normal densities and their scalar contractions.

Two independent routes are provided:

* :func:`dphi` builds the full derivative vector ``D^{⊗r} φ_Σ(x)`` of length
  ``d**r`` from the multivariate Hermite tensor recursion.
* :class:`EtaSeries` evaluates the even-order contractions
  ``[(vec' A)^{⊗r} ⊗ (vec' B)^{⊗s}] D^{⊗(2r+2s)} φ_Σ(x)`` without forming the
  derivative vector.  Applying ``(D'AD)^r (D'BD)^s`` to the Fourier
  representation of ``φ_Σ`` turns the contraction into a joint moment of two
  quadratic forms of a Gaussian vector ``T ~ N(i Σ^{-1} x, Σ^{-1})``, whose
  cumulant generating function is known in closed form.  Everything reduces
  to a handful of quadratic forms in ``x`` per evaluation, which is what the
  O(n^2) selector sums need.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import DEFAULT_SIZE_CAP, as_spd, check_size

#: Exponents below this are flushed to an exact zero.
LOG_UNDERFLOW = -700.0


def _as_cov(Sigma, d: int | None = None) -> np.ndarray:
    S = as_spd(np.atleast_2d(np.asarray(Sigma, dtype=float)), "covariance")
    if d is not None and S.shape[0] != d:
        raise ValueError(f"covariance is {S.shape[0]}x{S.shape[0]}, expected {d}x{d}")
    return S


def _as_points(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1) if X.size == d else X.reshape(-1, 1)
    if X.shape[-1] != d:
        raise ValueError(f"points have dimension {X.shape[-1]}, expected {d}")
    return X


def log_normal_const(Sigma) -> float:
    """``log φ_Σ(0) = -½ log|2πΣ|``."""
    Sigma = np.atleast_2d(Sigma)
    sign, logdet = np.linalg.slogdet(2.0 * np.pi * Sigma)
    if sign <= 0:
        raise ValueError("covariance must be positive definite")
    return -0.5 * logdet


def _guarded_exp(logv: np.ndarray) -> np.ndarray:
    out = np.exp(np.maximum(logv, LOG_UNDERFLOW))
    out[logv < LOG_UNDERFLOW] = 0.0
    return out


def phi(X, Sigma) -> np.ndarray:
    """Normal density ``φ_Σ`` at each row of ``X``."""
    S = _as_cov(Sigma)
    X = _as_points(X, S.shape[0])
    P = np.linalg.inv(S)
    q = np.einsum("mi,ij,mj->m", X, P, X)
    return _guarded_exp(-0.5 * q + log_normal_const(S))


# -- quadratic forms through monomials ------------------------------------------

def quad_monomials(X) -> np.ndarray:
    """Products ``x_i x_j`` (i <= j) for each row; shape ``(m, d(d+1)/2)``."""
    X = np.asarray(X, dtype=float)
    iu, ju = np.triu_indices(X.shape[-1])
    return X[..., iu] * X[..., ju]


def quad_weights(Q) -> np.ndarray:
    """Weights ``c`` with ``x'Qx = quad_monomials(x) @ c`` for symmetric ``Q``."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    iu, ju = np.triu_indices(Q.shape[0])
    return np.where(iu == ju, 1.0, 2.0) * Q[iu, ju]


# -- Hermite tensor route ----------------------------------------------------------

def hermite_tensor(X, Sigma, r: int, cap: int | None = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Hermite tensors with ``D^{⊗r} φ_Σ(x) = (-1)^r φ_Σ(x) He_r(x)``.

    Returns an array of shape ``(m,) + (d,) * r``.  Uses the recursion
    ``He_{k+1}[..., j] = z_j He_k - Σ_l P[i_l, j] He_{k-1}[..without i_l..]``
    with ``P = Σ^{-1}`` and ``z = P x``.
    """
    S = _as_cov(Sigma)
    d = S.shape[0]
    X = _as_points(X, d)
    if cap is not None:
        check_size(d, r, cap)
    P = np.linalg.inv(S)
    z = X @ P
    m = X.shape[0]
    prev = np.ones((m,))
    if r == 0:
        return prev
    cur = z.copy()
    for k in range(1, r):
        nxt = cur[..., None] * z.reshape((m,) + (1,) * k + (d,))
        # outer(prev, P) has axes (m, rest..., i_l, j); move i_l to slot l
        op = prev[..., None, None] * P
        for l in range(k):
            nxt -= np.moveaxis(op, 1 + (k - 1), 1 + l)
        prev, cur = cur, nxt
    return cur


def dphi_batch(X, Sigma, r: int, cap: int | None = DEFAULT_SIZE_CAP) -> np.ndarray:
    """``D^{⊗r} φ_Σ`` at every row of ``X``; shape ``(m, d**r)``."""
    S = _as_cov(Sigma)
    X = _as_points(X, S.shape[0])
    He = hermite_tensor(X, S, r, cap)
    dens = phi(X, S)
    return ((-1) ** r * dens).reshape(-1, 1) * He.reshape(X.shape[0], -1)


def dphi(x, Sigma, r: int, cap: int | None = DEFAULT_SIZE_CAP) -> np.ndarray:
    """The derivative vector ``D^{⊗r} φ_Σ(x)`` of length ``d**r``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    return dphi_batch(x, Sigma, r, cap)[0]


# -- moment-series route -----------------------------------------------------------

def _poly_mul(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Product of bivariate matrix polynomials, truncated to X's degree box."""
    R, Sd = X.shape[:2]
    out = np.zeros_like(X)
    for p in range(R):
        for q in range(Sd):
            acc = out[p, q]
            for i in range(p + 1):
                for j in range(q + 1):
                    acc += X[i, j] @ Y[p - i, q - j]
    return out


def series_exp(L: np.ndarray) -> np.ndarray:
    """Coefficients of ``exp(L(a, b))`` for a batch of truncated series.

    ``L`` has shape ``(r+1, s+1, m)`` with ``L[0, 0] == 0``; the batch axis is
    last so every coefficient row is contiguous.
    """
    R, Sd, m = L.shape
    G = np.zeros_like(L)
    G[0, 0] = 1.0
    for q in range(1, Sd):
        acc = np.zeros(m)
        for j in range(1, q + 1):
            acc += j * L[0, j] * G[0, q - j]
        G[0, q] = acc / q
    for p in range(1, R):
        for q in range(Sd):
            acc = np.zeros(m)
            for i in range(1, p + 1):
                for j in range(q + 1):
                    acc += i * L[i, j] * G[p - i, q - j]
            G[p, q] = acc / p
    return G


def _affine_times(aff: dict, poly: dict, scale: float) -> dict:
    out: dict = {}
    for ea, ca in aff.items():
        for ep, cp in poly.items():
            e = tuple(x + y for x, y in zip(ea, ep))
            out[e] = out.get(e, 0.0) + scale * ca * cp
    return out


def series_exp_poly(L: list, K: int) -> list:
    """:func:`series_exp` over coefficients that are affine polynomials.

    ``L[p][q]`` maps exponent tuples in ``K`` variables to coefficients; the
    result holds polynomials of total degree ``<= p + q``.
    """
    R, Sd = len(L), len(L[0])
    one = {(0,) * K: 1.0}
    G = [[{} for _ in range(Sd)] for _ in range(R)]
    G[0][0] = one
    for q in range(1, Sd):
        acc: dict = {}
        for j in range(1, q + 1):
            for e, c in _affine_times(L[0][j], G[0][q - j], j / q).items():
                acc[e] = acc.get(e, 0.0) + c
        G[0][q] = acc
    for p in range(1, R):
        for q in range(Sd):
            acc = {}
            for i in range(1, p + 1):
                for j in range(q + 1):
                    for e, c in _affine_times(L[i][j], G[p - i][q - j], i / p).items():
                        acc[e] = acc.get(e, 0.0) + c
            G[p][q] = acc
    return G


def monomial_exponents(K: int, degree: int) -> list[tuple]:
    """All exponent tuples in ``K`` variables of total degree ``<= degree``, graded order."""
    out = [(0,) * K]
    frontier = [(0,) * K]
    for _ in range(degree):
        nxt = []
        seen = set()
        for e in frontier:
            last = max([k for k in range(K) if e[k]] or [0])
            for k in range(last, K):
                f = e[:k] + (e[k] + 1,) + e[k + 1 :]
                if f not in seen:
                    seen.add(f)
                    nxt.append(f)
        out.extend(nxt)
        frontier = nxt
    return out


class EtaSeries:
    """Precomputed evaluator for ``η_{2r,2s}(x; A, B, Σ)`` at many points.

    With ``V = Σ^{-1}`` and ``M = aA + bB``,

        log E exp(T'MT) = ½ Σ_k (2^k / k) tr((MV)^k) - Σ_k 2^k x'V (MV)^k M V x,

    for ``T ~ N(iVx, V)``, and
    ``η = (-1)^{r+s} φ_Σ(x) r! s! [a^r b^s] E exp(T'MT)``.
    """

    def __init__(self, A, B, Sigma, r: int, s: int):
        if r < 0 or s < 0:
            raise ValueError("orders must be nonnegative")
        S = _as_cov(Sigma)
        d = S.shape[0]
        A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(d, d)
        B = np.atleast_2d(np.asarray(B, dtype=float)).reshape(d, d)
        self.d, self.r, self.s = d, r, s
        self.Sigma = S
        V = np.linalg.inv(S)
        V = 0.5 * (V + V.T)
        self.log_norm = log_normal_const(S)
        self.phi_weights = -0.5 * quad_weights(V)

        shape = (r + 1, s + 1, d, d)
        Mpoly = np.zeros(shape)
        if r >= 1:
            Mpoly[1, 0] = A
        if s >= 1:
            Mpoly[0, 1] = B
        MV = np.zeros(shape)
        if r >= 1:
            MV[1, 0] = A @ V
        if s >= 1:
            MV[0, 1] = B @ V
        trace = np.zeros((r + 1, s + 1))
        quad = np.zeros(shape)
        W = np.zeros(shape)
        W[0, 0] = np.eye(d)
        for k in range(0, r + s + 1):
            if k >= 1:
                W = _poly_mul(W, MV)
                trace += 2.0 ** (k - 1) / k * np.trace(W, axis1=2, axis2=3)
            quad += 2.0**k * _poly_mul(W, Mpoly)
        self.trace = trace
        # L_pq(x) = trace_pq - x' V C_pq V x
        self.quad_w = np.zeros((r + 1, s + 1, d * (d + 1) // 2))
        for p in range(r + 1):
            for q in range(s + 1):
                self.quad_w[p, q] = -quad_weights(V @ quad[p, q] @ V)
        self.sign_fact = (-1) ** (r + s) * math.factorial(r) * math.factorial(s)

    def log_coefficients(self, mono: np.ndarray) -> np.ndarray:
        """Series coefficients ``L_pq`` per point, shape ``(r+1, s+1, m)``."""
        L = self.trace[..., None] + self.quad_w @ np.ascontiguousarray(mono.T)
        L[0, 0] = 0.0
        return L

    @property
    def degree(self) -> int:
        return self.r + self.s

    def polynomial(self) -> dict:
        """``[a^r b^s] E exp(T'MT)`` as a polynomial in the quadratic monomials.

        Every ``L_pq`` is affine in the monomials, so the coefficient is a
        polynomial of total degree ``r + s``; weighted sums of ``η`` then only
        need weighted monomial moments of the data.
        """
        K = self.quad_w.shape[-1]
        zero = (0,) * K
        L = []
        for p in range(self.r + 1):
            row = []
            for q in range(self.s + 1):
                if p == 0 and q == 0:
                    row.append({})
                    continue
                aff = {zero: float(self.trace[p, q])}
                for k in range(K):
                    e = tuple(int(k == j) for j in range(K))
                    aff[e] = float(self.quad_w[p, q, k])
                row.append(aff)
            L.append(row)
        return series_exp_poly(L, K)[self.r][self.s]

    def from_monomials(self, mono: np.ndarray) -> np.ndarray:
        mono = np.atleast_2d(mono)
        logphi = mono @ self.phi_weights + self.log_norm
        dens = _guarded_exp(logphi)
        if self.r == 0 and self.s == 0:
            return dens
        G = series_exp(self.log_coefficients(mono))
        return self.sign_fact * dens * G[self.r, self.s]

    def __call__(self, X) -> np.ndarray:
        X = _as_points(X, self.d)
        return self.from_monomials(quad_monomials(X))

    def at_zero(self) -> float:
        """Value at ``x = 0``."""
        if self.r == 0 and self.s == 0:
            return math.exp(self.log_norm)
        G = series_exp(self.trace[..., None].copy())
        return float(self.sign_fact * math.exp(self.log_norm) * G[self.r, self.s, 0])


def eta(x, A, B, Sigma, r: int, s: int) -> float | np.ndarray:
    """``η_{2r,2s}(x; A, B, Σ)``; vectorized over rows of ``x``."""
    S = _as_cov(Sigma)
    X = np.asarray(x, dtype=float)
    vals = EtaSeries(A, B, S, r, s)(X)
    return float(vals[0]) if _is_single_point(X, S.shape[0]) else vals


def eta_short(x, Sigma, r: int) -> float | np.ndarray:
    """``η_{2r}(x; Σ) = η_{2r,0}(x; I, I, Σ)``, the trace-contracted derivative."""
    S = _as_cov(Sigma)
    eye = np.eye(S.shape[0])
    return eta(x, eye, eye, S, r, 0)


def nu(Sigma, r: int) -> float:
    """``ν_r(Σ) = (-1)^r η_{2r}(0; Σ) / φ_Σ(0)``.

    Equals the moment ``E[(Z'Σ^{-1}Z)^r]`` for ``Z ~ N(0, I_d)``.
    """
    S = _as_cov(Sigma)
    d = S.shape[0]
    if r == 0:
        return 1.0
    ser = EtaSeries(np.eye(d), np.eye(d), S, r, 0)
    G = series_exp(ser.trace[..., None].copy())
    return float(math.factorial(r) * G[r, 0, 0])


def cross_integral(a, A, b, B, r: int) -> float:
    """``∫ D^{⊗r}φ_A(x - a)' D^{⊗r}φ_B(x - b) dx = (-1)^r η_{2r}(a - b; A + B)``."""
    A = _as_cov(A)
    B = _as_cov(B, A.shape[0])
    diff = np.atleast_1d(np.asarray(a, dtype=float)) - np.atleast_1d(np.asarray(b, dtype=float))
    return (-1) ** r * float(np.ravel(eta_short(diff.reshape(1, -1), A + B, r))[0])


def _is_single_point(X: np.ndarray, d: int) -> bool:
    return X.ndim <= 1 and X.size == d
