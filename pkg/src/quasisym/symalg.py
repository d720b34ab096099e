"""Elementary symmetric functions and the small matrices built from them.

Conventions: ``sigma(h, lam)`` is ``(-1)^h e_h(lam)``, i.e. the coefficient
of ``x^(m-h)`` in ``prod(x - lam_i)``.  Indices ``i`` passed to
:func:`pi_remove` are 1-based to match the usual notation.
"""
from __future__ import annotations

import numpy as np

from .errors import EpsOutOfRange, IndexOutOfRange, OrderTooLarge

MAX_ORDER = 8


def as_roots(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if not np.all(np.isfinite(lam)):
        raise ValueError("root vector must be finite")
    return lam


def check_order(m):
    if m > MAX_ORDER:
        raise OrderTooLarge(f"order {m} exceeds the supported maximum {MAX_ORDER}")


def sigmas(lam) -> np.ndarray:
    """All signed elementary symmetric functions sigma_0..sigma_m.

    Built by multiplying out prod(x - lam_i) one factor at a time.
    """
    lam = as_roots(lam)
    c = np.zeros(len(lam) + 1)
    c[0] = 1.0
    for k, x in enumerate(lam, start=1):
        # multiply the degree k-1 polynomial by (x_var - x)
        c[1:k + 1] = c[1:k + 1] - x * c[0:k]
    return c


def sigma(h: int, lam) -> float:
    lam = as_roots(lam)
    if not 0 <= h <= len(lam):
        raise IndexOutOfRange(f"sigma index {h} outside [0, {len(lam)}]")
    return float(sigmas(lam)[h])


def pi_remove(i: int, lam) -> np.ndarray:
    lam = as_roots(lam)
    if not 1 <= i <= len(lam):
        raise IndexOutOfRange(f"index {i} outside [1, {len(lam)}]")
    return np.delete(lam, i - 1)


def sylvester_matrix(lam) -> np.ndarray:
    """Companion matrix with ones on the superdiagonal and -sigma in the last row."""
    lam = as_roots(lam)
    m = len(lam)
    if m < 1:
        raise ValueError("need at least one root")
    check_order(m)
    s = sigmas(lam)
    A = np.diag(np.ones(m - 1), 1)
    A[m - 1, :] = -s[:0:-1]
    return A


def w_row(lam_reduced, m) -> np.ndarray:
    """(sigma_{m-1}, ..., sigma_1, 1) of an (m-1)-vector."""
    return sigmas(lam_reduced)[::-1].copy() if m > 1 else np.ones(1)


def w_matrix(lam) -> np.ndarray:
    lam = as_roots(lam)
    m = len(lam)
    check_order(m)
    return np.array([w_row(np.delete(lam, i), m) for i in range(m)])


def p_matrix(lam) -> np.ndarray:
    """Unit lower triangular matrix whose row d carries the sigmas of lam_1..lam_{d-1}."""
    lam = as_roots(lam)
    m = len(lam)
    check_order(m)
    P = np.zeros((m, m))
    for d in range(m):
        P[d, :d + 1] = sigmas(lam[:d])[::-1]
    return P


def h_eps(m: int, eps: float) -> np.ndarray:
    check_eps(eps)
    return np.diag(eps ** np.arange(m - 1, -1, -1, dtype=float))


def check_eps(eps):
    if not (0.0 < eps <= 1.0):
        raise EpsOutOfRange(f"eps={eps} outside (0, 1]")


def sigma_difference(lam, i: int, j: int, k: int):
    """Both sides of the identity for sigma_{m-k}(pi_i lam) - sigma_{m-k}(pi_j lam).

    Returns (lhs, rhs) with rhs = (-1)^(m-k) (lam_j - lam_i) e_{m-k-1}(lam without i, j).
    Indices are 1-based, 1 <= k <= m-1.
    """
    lam = as_roots(lam)
    m = len(lam)
    h = m - k
    lhs = sigma(h, pi_remove(i, lam)) - sigma(h, pi_remove(j, lam))
    if i == j:
        return lhs, 0.0
    rest = np.delete(lam, [i - 1, j - 1])
    # e_{h-1}(rest) = (-1)^(h-1) sigma_{h-1}(rest)
    e = (-1) ** (h - 1) * sigma(h - 1, rest) if h >= 1 else 0.0
    rhs = (-1) ** h * (lam[j - 1] - lam[i - 1]) * e
    return lhs, rhs
