"""First order system matrices, Levi-type conditions on lower order terms and
the |WBV| <= C |WV| estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LevelOutOfRange, PencilSolveFailure
from .spectrum import ProblemSpec, bracket_xi, normalised_roots, symbol_part, xi_points
from .symalg import sigmas, sylvester_matrix, w_matrix
from .symmetriser import hermitian_pencil_max


@dataclass(frozen=True)
class SystemMatrices:
    A1: np.ndarray
    B: np.ndarray
    b_row: np.ndarray
    xi: tuple
    t: float

    @property
    def total(self):
        return self.A1 + self.B


@dataclass
class LeviReport:
    per_j_constant: list
    global_C: float
    wbv_constant: float
    relaxed_level: int | None
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self, check_id="levi-check"):
        return {
            "id": check_id,
            "pass": bool(self.passed),
            "samples": int(self.details.get("samples", 0)),
            "constants": {
                "per_j_constant": list(self.per_j_constant),
                "global_C": self.global_C,
                "wbv_constant": self.wbv_constant,
                "relaxed_level": self.relaxed_level,
            },
            "worst_case": {k: v for k, v in self.details.items() if k != "samples"},
        }


def _lower_part(spec, t, xi, p, level=None):
    """sum over lower order a_{p,gamma} xi^gamma, optionally restricted to |gamma| = p - 1 - level."""
    total = 0.0
    for (q, gamma), e in spec.lower.items():
        if q != p:
            continue
        if level is not None and sum(gamma) != p - 1 - level:
            continue
        x = 1.0
        for xv, g in zip(xi, gamma):
            x *= xv ** g
        total += e(t) * x
    return total


def lower_row(spec: ProblemSpec, t, xi, level=None) -> np.ndarray:
    """Bottom row B_1..B_m; column j collects order p = m - j + 1 terms times <xi>^(j-m)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    br = bracket_xi(xi)
    m = spec.m
    row = np.zeros(m, dtype=complex)
    for j in range(1, m + 1):
        p = m - j + 1
        if level is not None and level > p - 1:
            continue
        row[j - 1] = -_lower_part(spec, t, xi, p, level) * br ** (j - m)
    return row


def system_matrices(spec: ProblemSpec, t, xi) -> SystemMatrices:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    br = bracket_xi(xi)
    m = spec.m
    A1 = np.diag(np.full(m - 1, br, dtype=complex), 1)
    for j in range(1, m + 1):
        p = m - j + 1
        A1[m - 1, j - 1] = -symbol_part(spec, spec.principal, t, xi, p) * br ** (j - m)
    b_row = lower_row(spec, t, xi)
    B = np.zeros((m, m), dtype=complex)
    B[m - 1, :] = b_row
    return SystemMatrices(A1, B, b_row, tuple(map(float, xi)), float(t))


def sigma_weights(lam) -> np.ndarray:
    """s_j = sum_i |sigma_{m-j}^{(m-1)}(pi_i lam)|^2 for j = 1..m."""
    lam = np.asarray(lam, dtype=float)
    m = len(lam)
    W = w_matrix(lam)  # row i = (sigma_{m-1}, ..., sigma_1, 1) of pi_i lam
    return np.sum(np.abs(W) ** 2, axis=0)


def _ratio(num, den):
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def wbv_sup_detail(lam, b_row, n_samples=64, rng=None, ridge_scale=1e-14):
    """Pencil and sampled estimates of sup_V |WBV| / |WV|."""
    lam = np.asarray(lam, dtype=float)
    m = len(lam)
    b_row = np.asarray(b_row, dtype=complex)
    if not np.any(b_row):
        return 0.0, 0.0
    W = w_matrix(lam).astype(complex)
    B = np.zeros((m, m), dtype=complex)
    B[m - 1, :] = b_row
    WB = W @ B
    K = WB.conj().T @ WB
    M = W.conj().T @ W
    eta = ridge_scale * float(np.real(np.trace(M)))
    M = M + eta * np.eye(m)
    top, _ = hermitian_pencil_max(K, M)
    pencil = math.sqrt(max(top, 0.0))
    sampled = 0.0
    if n_samples:
        rng = np.random.default_rng(rng)
        V = rng.standard_normal((m, n_samples)) + 1j * rng.standard_normal((m, n_samples))
        num = np.linalg.norm(WB @ V, axis=0)
        den = np.linalg.norm(W @ V, axis=0)
        sampled = float(np.max(np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, math.inf, 0.0))))
    return pencil, sampled


def wbv_sup(lam, b_row, n_samples=64, rng=None) -> float:
    pencil, sampled = wbv_sup_detail(lam, b_row, n_samples, rng)
    if pencil < sampled - 1e-8 * max(1.0, sampled):
        raise PencilSolveFailure(f"pencil sup {pencil:.6e} below sampled sup {sampled:.6e}")
    return max(pencil, sampled)


def default_deltas(m):
    return [10.0 ** (m - k) for k in range(1, m)]


def region_diagnostics(lam, b_row, V, deltas=None) -> dict:
    """Locate V in the nested partition by the regions Sigma_k and evaluate both sides.

    Region k (1 <= k <= m-1) is the first k with
        |V_m|^2 + sum_{j=k+1}^{m-1} s_j |V_j|^2 <= delta_k s_k |V_k|^2,
    region m is the complement of all of them.  The returned ``dominant`` is
    s_k |V_k|^2 of that region (s_m = m).
    """
    lam = np.asarray(lam, dtype=float)
    m = len(lam)
    V = np.asarray(V, dtype=complex)
    if deltas is None:
        deltas = default_deltas(m)
    if len(deltas) != m - 1 or any(d <= 0 for d in deltas):
        raise ValueError("need m-1 positive deltas")
    s = sigma_weights(lam)
    a = np.abs(V) ** 2
    region = m
    for k in range(1, m):
        lhs = a[m - 1] + sum(s[j - 1] * a[j - 1] for j in range(k + 1, m))
        if lhs <= deltas[k - 1] * s[k - 1] * a[k - 1]:
            region = k
            break
    W = w_matrix(lam)
    B = np.zeros((m, m), dtype=complex)
    B[m - 1, :] = np.asarray(b_row, dtype=complex)
    return {
        "region": region,
        "dominant": float(s[region - 1] * a[region - 1]),
        "wbv2": float(np.linalg.norm(W @ (B @ V)) ** 2),
        "wv2": float(np.linalg.norm(W @ V) ** 2),
        "weights": s.tolist(),
    }


def _grid_sweep(spec, t_grid, xi_grid, row_fn, n_samples, rng_seed):
    m = spec.m
    pts = xi_points(xi_grid, spec.n)
    per_j = np.zeros(m)
    worst_pts = [None] * m
    wbv_max = 0.0
    crosscheck_ok = True
    worst_gap = math.inf
    count = 0
    rng = np.random.default_rng(rng_seed)
    for xi in pts:
        if np.linalg.norm(xi) < spec.R:
            continue
        for t in t_grid:
            lam = normalised_roots(spec, t, xi)
            row = row_fn(t, xi)
            s = sigma_weights(lam)
            for j in range(m):
                r = _ratio(abs(row[j]) ** 2, s[j])
                if worst_pts[j] is None or r > per_j[j]:
                    per_j[j] = r
                    worst_pts[j] = (float(t), list(map(float, xi)))
            pencil, sampled = wbv_sup_detail(lam, row, n_samples, rng)
            gap = pencil - (sampled - 1e-8 * max(1.0, sampled))
            worst_gap = min(worst_gap, gap)
            if gap < 0:
                crosscheck_ok = False
            wbv_max = max(wbv_max, pencil, sampled)
            count += 1
    return per_j, worst_pts, wbv_max, crosscheck_ok, worst_gap, count


def levi_lb_check(spec: ProblemSpec, t_grid, xi_grid, n_samples=32, seed=0) -> LeviReport:
    per_j, worst_pts, wbv_max, ok, gap, count = _grid_sweep(
        spec, t_grid, xi_grid, lambda t, xi: lower_row(spec, t, xi), n_samples, seed
    )
    finite = bool(np.all(np.isfinite(per_j)))
    return LeviReport(
        per_j.tolist(),
        float(per_j.max()) if len(per_j) else 0.0,
        wbv_max,
        None,
        finite,
        {"samples": count, "worst_points": worst_pts, "wbv_crosscheck": ok, "min_crosscheck_margin": gap},
    )


def admissible_level(m, k, h):
    """Whether h + 1 >= 2(m-1)(k-1) / (k + 2(m-1))."""
    return h + 1 >= 2 * (m - 1) * (k - 1) / (k + 2 * (m - 1))


def admissibility_table(m, k):
    return {h: admissible_level(m, k, h) for h in range(0, max(m - 1, 1))}


def relaxed_levi_check(spec: ProblemSpec, h: int, t_grid, xi_grid, k=None, n_samples=32, seed=0) -> LeviReport:
    m = spec.m
    if not 0 <= h <= m - 2:
        raise LevelOutOfRange(f"level {h} outside [0, {m - 2}]")
    if k is None:
        k = spec.k_value

    def row(t, xi):
        return sum(lower_row(spec, t, xi, level=l) for l in range(h + 1))

    per_j, worst_pts, wbv_max, ok, gap, count = _grid_sweep(spec, t_grid, xi_grid, row, n_samples, seed)
    finite = bool(np.all(np.isfinite(per_j)))
    details = {"samples": count, "worst_points": worst_pts, "wbv_crosscheck": ok, "k": k}
    if k is not None:
        adm = admissible_level(m, k, h)
        details["admissible"] = adm
        details["level_threshold"] = 2 * (m - 1) * (k - 1) / (k + 2 * (m - 1))
        details["gevrey_bound"] = 1 + k / (2 * (m - 1)) if adm else None
    if m >= 2 and h == 0:
        details["smooth_h0_bound"] = 1 + 2 / (2 * m - 3)
    passed = finite and details.get("admissible", True)
    return LeviReport(per_j.tolist(), float(per_j.max()), wbv_max, h, passed, details)


def zero_row_commutator(lam, b_row, eps):
    """Q^(m-1)(pi_i lam)^# B - B^* Q^(m-1)(pi_i lam)^# for every i; all vanish for a bottom-row B."""
    from .symmetriser import assemble, build, pad

    lam = np.asarray(lam, dtype=float)
    m = len(lam)
    B = np.zeros((m, m), dtype=complex)
    B[m - 1, :] = np.asarray(b_row, dtype=complex)
    out = []
    for i in range(m):
        Qs = pad(assemble(build(np.delete(lam, i)), eps), m)
        out.append(Qs @ B - B.conj().T @ Qs)
    return out


def lemma53_ratio(lam, V, k):
    """LHS / RHS of sum_i |sum_{j>k} sigma_{m-j} V_j + sigma_{m-k} V_k|^2 >= c s_k |V_k|^2."""
    lam = np.asarray(lam, dtype=float)
    m = len(lam)
    W = w_matrix(lam)
    V = np.asarray(V, dtype=complex)
    lhs = float(np.sum(np.abs(W[:, k - 1:] @ V[k - 1:]) ** 2))
    rhs = float(np.sum(np.abs(W[:, k - 1]) ** 2) * abs(V[k - 1]) ** 2)
    return _ratio(lhs, rhs) if rhs > 0 else math.inf


def _stable_ratio(a, b):
    if a == b:
        return 1.0
    lo, hi = min(a, b), max(a, b)
    return hi / lo if lo > 0 else math.inf


def levi_refinement_check(spec: ProblemSpec, grids, n_samples=32, seed=0, factor=2.0) -> LeviReport:
    """levi_lb_check on a grid and on a refined grid; constants must agree within ``factor``.

    ``grids`` is a pair ((t_grid, xi_grid), (t_fine, xi_fine)).
    """
    (t0, x0), (t1, x1) = grids
    coarse = levi_lb_check(spec, t0, x0, n_samples, seed)
    fine = levi_lb_check(spec, t1, x1, n_samples, seed)
    c_ratio = _stable_ratio(coarse.global_C, fine.global_C)
    w_ratio = _stable_ratio(coarse.wbv_constant, fine.wbv_constant)
    cross = coarse.details["wbv_crosscheck"] and fine.details["wbv_crosscheck"]
    finite = coarse.passed and fine.passed and math.isfinite(fine.wbv_constant)
    details = dict(fine.details)
    details.update({
        "samples": coarse.details["samples"] + fine.details["samples"],
        "coarse_global_C": coarse.global_C,
        "coarse_wbv_constant": coarse.wbv_constant,
        "refinement_ratio_C": c_ratio,
        "refinement_ratio_wbv": w_ratio,
        "finite": finite,
    })
    passed = finite and cross and c_ratio <= factor and w_ratio <= factor
    return LeviReport(fine.per_j_constant, fine.global_C, fine.wbv_constant, None, passed, details)
