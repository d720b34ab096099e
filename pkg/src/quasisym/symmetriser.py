"""The quasi-symmetriser Q_eps(lam) of a Sylvester matrix and checks of its properties.

Q_eps(lam) = sum over permutations rho of P_eps(lam_rho)^T P_eps(lam_rho) with
P_eps = H_eps P.  Writing H_eps^2 = sum_d eps^(2(m-d)) e_d e_d^T splits Q_eps
into parts Q_0..Q_{m-1} with Q_eps = sum_j eps^(2j) Q_j.  Row d of P(lam_rho)
only depends on the set {rho_1..rho_{d-1}}, so each part is a sum over
subsets weighted by the number of permutations sharing that prefix set.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import (
    DegenerateDenominator,
    PencilSolveFailure,
    SampleNotInSM,
    SingularAtSample,
)
from .symalg import as_roots, check_eps, check_order, sigmas, sylvester_matrix, w_matrix

PSD_TOL = 1e-10
PROPERTY_IDS = (
    "coercivity",
    "commutator",
    "recursion",
    "q0_factorisation",
    "q0_determinant",
    "diag_product",
    "near_diagonal",
)


@dataclass(frozen=True)
class QuasiSymmetriser:
    m: int
    lam: tuple
    parts: tuple = field(repr=False)

    def assemble(self, eps):
        return assemble(self, eps)


@dataclass
class PropertyReport:
    property_id: str
    samples: int
    worst_ratio: float
    constant_estimate: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "id": self.property_id,
            "pass": bool(self.passed),
            "samples": int(self.samples),
            "constants": {"worst_ratio": self.worst_ratio, "constant_estimate": self.constant_estimate},
            "worst_case": self.details,
        }


def _row(subset_values, m):
    d = len(subset_values) + 1
    r = np.zeros(m)
    r[:d] = sigmas(subset_values)[::-1]
    return r


def build(lam) -> QuasiSymmetriser:
    lam = as_roots(lam)
    m = len(lam)
    check_order(m)
    parts = [np.zeros((m, m)) for _ in range(m)]
    for d in range(1, m + 1):
        weight = math.factorial(d - 1) * math.factorial(m - d + 1)
        acc = np.zeros((m, m))
        for subset in itertools.combinations(range(m), d - 1):
            r = _row(lam[list(subset)], m)
            acc += np.outer(r, r)
        parts[m - d] = weight * acc
    return QuasiSymmetriser(m, tuple(float(x) for x in lam), tuple(parts))


def assemble(q: QuasiSymmetriser, eps: float) -> np.ndarray:
    check_eps(eps)
    out = np.zeros((q.m, q.m))
    for j in range(q.m - 1, -1, -1):
        out = out * eps ** 2 + q.parts[j]
    return out


def pad(M, m):
    """Embed an (m-1)x(m-1) matrix in the top-left corner of an m x m zero matrix."""
    out = np.zeros((m, m), dtype=np.result_type(M, float))
    k = M.shape[0]
    out[:k, :k] = M
    return out


def _rel(residual, scale):
    return float(residual) / max(float(scale), np.finfo(float).tiny)


def vandermonde_square(lam):
    lam = as_roots(lam)
    out = 1.0
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            out *= (lam[i] - lam[j]) ** 2
    return out


def q0_determinant_formula(lam, convention="stated"):
    """Closed form for det Q_0.

    ``stated``: (m-1)! prod (lam_i - lam_j)^2.
    ``exact``: ((m-1)!)^m prod (lam_i - lam_j)^2, which is what the
    factorisation Q_0 = (m-1)! W^T W implies since |det W| is the
    Vandermonde determinant.  Both agree for m <= 2.
    """
    lam = as_roots(lam)
    m = len(lam)
    f = math.factorial(m - 1)
    power = 1 if convention == "stated" else m
    return f ** power * vandermonde_square(lam)


def _sigmas_rational(vals):
    c = [Fraction(1)] + [Fraction(0)] * len(vals)
    for k, x in enumerate(vals, start=1):
        for h in range(k, 0, -1):
            c[h] = c[h] - x * c[h - 1]
    return c


def q0_rational(lam):
    """Q_0 in exact rational arithmetic at the (binary) root values, from the subset sum."""
    vals = [Fraction(float(x)) for x in as_roots(lam)]
    m = len(vals)
    Q = [[Fraction(0)] * m for _ in range(m)]
    # Q_0 only involves d = m: rows indexed by (m-1)-subsets, weight (m-1)! 1!
    weight = math.factorial(m - 1)
    for subset in itertools.combinations(range(m), m - 1):
        r = _sigmas_rational([vals[i] for i in subset])[::-1]
        for a in range(m):
            for b in range(m):
                Q[a][b] += weight * r[a] * r[b]
    return Q


def det_rational(M):
    """Determinant by fraction-exact Gaussian elimination."""
    A = [list(row) for row in M]
    n = len(A)
    det = Fraction(1)
    for k in range(n):
        piv = next((i for i in range(k, n) if A[i][k] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != k:
            A[k], A[piv] = A[piv], A[k]
            det = -det
        det *= A[k][k]
        for i in range(k + 1, n):
            f = A[i][k] / A[k][k]
            if f:
                for j in range(k, n):
                    A[i][j] -= f * A[k][j]
    return det


def q0_determinant_rational(lam, convention="stated"):
    vals = [Fraction(float(x)) for x in as_roots(lam)]
    m = len(vals)
    v = Fraction(1)
    for i in range(m):
        for j in range(i + 1, m):
            v *= (vals[i] - vals[j]) ** 2
    return math.factorial(m - 1) ** (1 if convention == "stated" else m) * v


def det_residuals_rational(lam):
    """Relative errors of both closed forms against the exact det Q_0 at lam."""
    det = det_rational(q0_rational(lam))
    out = {}
    for conv in ("stated", "exact"):
        ref = q0_determinant_rational(lam, conv)
        if ref == 0:
            out[conv] = 0.0 if det == 0 else math.inf
        else:
            out[conv] = float(abs(det - ref) / abs(ref))
    return out


def verify_q0_identity(q: QuasiSymmetriser, tol=1e-10, det_tol=1e-8, det_convention="stated",
                       det_arithmetic="float") -> PropertyReport:
    """Q_0 = (m-1)! W^T W entrywise and det Q_0 against a closed form.

    ``det_arithmetic="float"`` takes the determinant of the floating point
    Q_0, whose relative accuracy is limited to about cond(Q_0) * eps;
    ``"rational"`` evaluates det Q_0 exactly at the same root values.
    """
    m = q.m
    lam = np.array(q.lam)
    W = w_matrix(lam)
    target = math.factorial(m - 1) * W.T @ W
    Q0 = q.parts[0]
    scale = np.max(np.abs(Q0))
    entry_res = _rel(np.max(np.abs(Q0 - target)), scale)
    det = float(np.linalg.det(Q0))
    det_res = {}
    for conv in ("stated", "exact"):
        ref = q0_determinant_formula(lam, conv)
        det_res[conv] = abs(det - ref) / abs(ref) if ref != 0 else abs(det) / max(scale, 1.0) ** m
    details_rational = {}
    if det_arithmetic == "rational":
        rat = det_residuals_rational(lam)
        details_rational = {"det_residual_stated_rational": rat["stated"],
                            "det_residual_exact_rational": rat["exact"]}
        gate = rat[det_convention]
    else:
        gate = det_res[det_convention]
    passed = entry_res <= tol and gate <= det_tol
    return PropertyReport(
        "q0_factorisation",
        1,
        max(entry_res, gate),
        float(math.factorial(m - 1)),
        passed,
        {
            "entry_residual": entry_res,
            "det": det,
            "det_residual_stated": det_res["stated"],
            "det_residual_exact": det_res["exact"],
            "det_convention": det_convention,
            "det_arithmetic": det_arithmetic,
            **details_rational,
        },
    )


def recursion_rhs(q: QuasiSymmetriser, eps: float) -> np.ndarray:
    m = q.m
    lam = np.array(q.lam)
    rhs = q.parts[0].copy()
    for i in range(m):
        sub = build(np.delete(lam, i))
        rhs += eps ** 2 * pad(assemble(sub, eps), m)
    return rhs


def verify_recursion(q: QuasiSymmetriser, eps_grid=(1.0, 0.3, 0.1, 0.03), tol=1e-9) -> PropertyReport:
    if q.m < 2:
        raise ValueError("recursion needs m >= 2")
    worst = 0.0
    worst_eps = None
    for eps in eps_grid:
        lhs = assemble(q, eps)
        res = _rel(np.max(np.abs(lhs - recursion_rhs(q, eps))), np.max(np.abs(lhs)))
        if res >= worst:
            worst, worst_eps = res, eps
    return PropertyReport("recursion", len(eps_grid), worst, 0.0, worst <= tol, {"eps": worst_eps})


def verify_coercivity(q: QuasiSymmetriser, eps_grid, spread=4.0) -> PropertyReport:
    m = q.m
    per_eps = []
    for eps in eps_grid:
        w = np.linalg.eigvalsh(assemble(q, eps))
        lo, hi = w[0], w[-1]
        if lo <= 16 * np.finfo(float).eps * hi:
            raise SingularAtSample(f"eigmin {lo:.3e} not positive at eps={eps}")
        per_eps.append(max(hi, eps ** (2 * (m - 1)) / lo))
    per_eps = np.array(per_eps)
    C = float(per_eps.max())
    variation = float(per_eps.max() / per_eps.min())
    return PropertyReport(
        "coercivity",
        len(eps_grid),
        variation,
        C,
        bool(np.isfinite(C) and variation <= spread),
        {"per_eps": per_eps.tolist(), "eps_grid": list(map(float, eps_grid))},
    )


def hermitian_pencil_max(K, M, ridge_scale=1e-14):
    """Largest |generalized eigenvalue| of the Hermitian pencil (K, M).

    A ridge of ridge_scale * trace(M) is added to M only if its Cholesky
    factorisation fails.  Returns (value, ridge_used).
    """
    ridge = 0.0
    try:
        w = scipy.linalg.eigh(K, M, eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        ridge = ridge_scale * float(np.real(np.trace(M)))
        try:
            w = scipy.linalg.eigh(K, M + ridge * np.eye(M.shape[0]), eigvals_only=True)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise PencilSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise PencilSolveFailure("non-finite generalized eigenvalues")
    return float(np.max(np.abs(w))), ridge


def commutator_ratio(q: QuasiSymmetriser, eps, A=None):
    """sup over V of |((QA - A^T Q)V, V)| / (QV, V) and the pencil ridge used."""
    if A is None:
        A = sylvester_matrix(q.lam)
    Q = assemble(q, eps)
    K = 1j * (Q @ A - A.T @ Q)
    return hermitian_pencil_max(K, Q.astype(complex))


def verify_commutator(q: QuasiSymmetriser, eps_grid, n_vectors=0, rng=None, spread=4.0) -> PropertyReport:
    A = sylvester_matrix(q.lam)
    rng = np.random.default_rng(rng)
    ratios = []
    ridges = []
    sampled_ok = True
    for eps in eps_grid:
        sup, ridge = commutator_ratio(q, eps, A)
        ratios.append(sup / eps)
        ridges.append(ridge)
        if n_vectors:
            Q = assemble(q, eps)
            C = Q @ A - A.T @ Q
            V = rng.standard_normal((q.m, n_vectors)) + 1j * rng.standard_normal((q.m, n_vectors))
            num = np.abs(np.einsum("ik,ij,jk->k", V.conj(), C, V))
            den = np.real(np.einsum("ik,ij,jk->k", V.conj(), Q, V))
            if np.max(num / den) > sup * (1 + 1e-8) + 1e-14:
                sampled_ok = False
    ratios = np.array(ratios)
    top = float(ratios.max())
    variation = float(top / ratios.min()) if ratios.min() > 0 else (1.0 if top == 0 else math.inf)
    return PropertyReport(
        "commutator",
        len(eps_grid),
        variation,
        top,
        bool(sampled_ok and variation <= spread),
        {"ratio_over_eps": ratios.tolist(), "ridge": ridges, "sampled_below_sup": sampled_ok},
    )


def verify_diag_product(q: QuasiSymmetriser, bound=None) -> PropertyReport:
    if q.m < 2:
        raise ValueError("diag product check needs m >= 2")
    lam = np.array(q.lam)
    num = float(np.prod(np.diag(q.parts[0])))
    den = 1.0
    for i in range(q.m):
        for j in range(i + 1, q.m):
            den *= lam[i] ** 2 + lam[j] ** 2
    if den == 0.0:
        ratio = 0.0 if num == 0.0 else math.inf
    else:
        ratio = num / den
    passed = math.isfinite(ratio) and (bound is None or ratio <= bound)
    return PropertyReport("diag_product", 1, ratio, ratio if bound is None else bound, passed, {"lam": list(q.lam)})


def diag_product_sweep(samples, doubling_tol=0.25) -> PropertyReport:
    """Max diag-product ratio over samples, with a stability check on the first half."""
    ratios = np.array([verify_diag_product(build(s)).worst_ratio for s in samples])
    half = ratios[: max(1, len(ratios) // 2)].max()
    full = ratios.max()
    stable = math.isfinite(full) and (full - half) <= doubling_tol * half
    return PropertyReport("diag_product", len(ratios), float(full), float(full), bool(stable), {"half_max": float(half)})


def lc_ratio(lam):
    """max over pairs of (l_i^2 + l_j^2) / (l_i - l_j)^2 with 0/0 -> 0, x/0 -> inf."""
    lam = as_roots(lam)
    worst = 0.0
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            num = lam[i] ** 2 + lam[j] ** 2
            den = (lam[i] - lam[j]) ** 2
            if den == 0.0:
                r = 0.0 if num == 0.0 else math.inf
            else:
                r = num / den
            worst = max(worst, r)
    return worst


def in_SM(lam, M):
    return lc_ratio(lam) <= M


def nearly_diagonal_eigmin(Q):
    d = np.sqrt(np.diag(Q))
    return float(np.linalg.eigvalsh(Q / np.outer(d, d))[0])


def near_diagonal_constant(samples, eps_grid, M, doubling_tol=0.25) -> PropertyReport:
    values = []
    for s in samples:
        if not in_SM(s, M):
            raise SampleNotInSM(f"sample {list(np.asarray(s, float))} violates the root separation bound M={M}")
        q = build(s)
        values.append(min(nearly_diagonal_eigmin(assemble(q, eps)) for eps in eps_grid))
    values = np.array(values)
    c_full = float(values.min())
    c_half = float(values[: max(1, len(values) // 2)].min())
    change = abs(c_half - c_full) / c_half if c_half > 0 else math.inf
    worst = int(np.argmin(values))
    return PropertyReport(
        "near_diagonal",
        len(values),
        change,
        c_full,
        bool(c_full > 0 and change <= doubling_tol),
        {"c0_half": c_half, "worst_sample": list(map(float, np.asarray(samples[worst], float)))},
    )


def first_term_integral(q_path, V_path, k: int, eps: float, T: float) -> float:
    """Trapezoidal integral of |(dQ/dt V, V)| / ((QV, V)^(1-1/k) |V|^(2/k)) on [0, T].

    ``q_path`` holds QuasiSymmetriser objects or ready matrices on a uniform grid.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    Qs = np.array([assemble(q, eps) if isinstance(q, QuasiSymmetriser) else np.atleast_2d(q) for q in q_path], dtype=float)
    V = np.array([np.atleast_1d(v) for v in V_path], dtype=complex)
    n = len(Qs)
    if n < 3 or len(V) != n:
        raise ValueError("need at least 3 matching samples")
    dt = T / (n - 1)
    dQ = np.gradient(Qs, dt, axis=0, edge_order=2)
    norms = np.linalg.norm(V, axis=1)
    zero = norms == 0.0
    if np.any(zero[1:] & zero[:-1]):
        raise DegenerateDenominator("V vanishes on a subinterval")
    integrand = np.zeros(n)
    for i in range(n):
        if zero[i]:
            continue
        num = abs(np.vdot(V[i], dQ[i] @ V[i]))
        qv = np.real(np.vdot(V[i], Qs[i] @ V[i]))
        integrand[i] = num / (qv ** (1 - 1 / k) * norms[i] ** (2 / k))
    return float(scipy.integrate.trapezoid(integrand, dx=dt))
