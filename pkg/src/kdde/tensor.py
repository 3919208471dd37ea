"""Kronecker-structured linear algebra primitives.

Vectors produced by Kronecker powers follow the usual convention that the
first factor varies slowest, which coincides with a C-order flatten of the
corresponding ``(d,) * r`` tensor.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

#: Default cap on the length of any materialized ``d**r`` vector.
DEFAULT_SIZE_CAP = 10**5


class TensorSizeError(ValueError):
    """Raised when a dense Kronecker object would exceed the size cap."""


def check_size(d: int, r: int, cap: int | None = DEFAULT_SIZE_CAP) -> int:
    """Return ``d**r`` or raise :class:`TensorSizeError` if it exceeds ``cap``."""
    size = d**r
    if cap is not None and size > cap:
        raise TensorSizeError(f"d**r = {d}**{r} = {size} exceeds size cap {cap}")
    return size


def kron(A, B) -> np.ndarray:
    """Kronecker product of two matrices (vectors are treated as columns)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return np.kron(A, B)


def kron_power(A, r: int, cap: int | None = DEFAULT_SIZE_CAP) -> np.ndarray:
    """r-fold Kronecker power; ``A**0`` is the 1x1 matrix ``[[1]]``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if cap is not None:
        check_size(A.shape[0] * A.shape[1], r, cap)
    out = np.ones((1, 1))
    for _ in range(r):
        out = np.kron(A, out)
    return out


def kron_power_matvec(A, r: int, x) -> np.ndarray:
    """Compute ``A^{⊗r} x`` without forming the Kronecker power.

    ``A`` must be square ``d x d`` and ``x`` of length ``d**r``.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    x = np.asarray(x, dtype=float)
    if x.size != d**r:
        raise ValueError(f"expected vector of length {d**r}, got {x.size}")
    if r == 0:
        return x.copy()
    T = x.reshape((d,) * r)
    for axis in range(r):
        T = np.moveaxis(np.tensordot(A, T, axes=([1], [axis])), 0, axis)
    return T.reshape(-1)


def vec(M) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    cols = rows if cols is None else cols
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def vech(M) -> np.ndarray:
    """Stack the lower triangle (including diagonal) column by column."""
    M = np.asarray(M, dtype=float)
    rows, cols = np.tril_indices(M.shape[0])
    # column-major order of the lower triangle
    order = np.lexsort((rows, cols))
    return M[rows[order], cols[order]]


def commutation_matrix(m: int, n: int) -> np.ndarray:
    """The ``mn x mn`` matrix K with ``K vec(A) = vec(A.T)`` for ``A`` of shape (m, n)."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    K = np.zeros((m * n, m * n))
    for i in range(m):
        for j in range(n):
            # A[i, j] sits at j*m + i in vec(A) and at i*n + j in vec(A.T)
            K[i * n + j, j * m + i] = 1.0
    return K


def symmetrizer(d: int, r: int, cap: int | None = DEFAULT_SIZE_CAP) -> np.ndarray:
    """Dense symmetrizer matrix ``S_{d,r}``.

    Pre-multiplying ``x_1 ⊗ ... ⊗ x_r`` by ``S_{d,r}`` averages the product
    over all permutations of its factors.
    """
    if d < 1 or r < 0:
        raise ValueError("need d >= 1 and r >= 0")
    size = check_size(d, r, cap)
    if r == 0:
        return np.ones((1, 1))
    idx = np.arange(size).reshape((d,) * r)
    S = np.zeros((size, size))
    rows = np.arange(size)
    perms = list(itertools.permutations(range(r)))
    for perm in perms:
        S[rows, np.transpose(idx, perm).reshape(-1)] += 1.0
    return S / len(perms)


def symmetrize(v, d: int, r: int) -> np.ndarray:
    """Apply ``S_{d,r}`` to a vector without materializing the matrix."""
    if r <= 1:
        return np.asarray(v, dtype=float).copy()
    T = np.asarray(v, dtype=float).reshape((d,) * r)
    perms = list(itertools.permutations(range(r)))
    acc = np.zeros_like(T)
    for perm in perms:
        acc += np.transpose(T, perm)
    return (acc / len(perms)).reshape(-1)


def odd_factorial(two_p: int) -> int:
    """``OF(2p) = (2p-1)(2p-3)...3.1`` for an even positive argument ``2p``."""
    if isinstance(two_p, bool) or int(two_p) != two_p or two_p < 2 or two_p % 2:
        raise ValueError(f"odd_factorial expects an even integer >= 2, got {two_p!r}")
    return math.prod(range(1, int(two_p), 2))


def is_spd(M, rtol: float = 1e-10) -> bool:
    """Symmetric within ``rtol`` (relative) and positive definite."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > rtol * scale:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0)


def as_spd(M, name: str = "matrix", rtol: float = 1e-10) -> np.ndarray:
    """Validate and return the symmetrized copy of an SPD matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not is_spd(M, rtol):
        raise ValueError(f"{name} must be symmetric positive definite")
    return 0.5 * (M + M.T)
