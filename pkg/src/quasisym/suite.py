"""Randomised property sweeps over root vectors."""
from __future__ import annotations

import math

import numpy as np
import scipy.optimize

from .symmetriser import (
    PropertyReport,
    assemble,
    build,
    commutator_ratio,
    diag_product_sweep,
    in_SM,
    lc_ratio,
    near_diagonal_constant,
    nearly_diagonal_eigmin,
    verify_coercivity,
    verify_q0_identity,
    verify_recursion,
)

DEFAULT_EPS = (1.0, 0.1, 0.01, 0.001)


def sample_box(rng, m, n, bound=1.0):
    return [rng.uniform(-bound, bound, m) for _ in range(n)]


def sample_SM(rng, m, n, M, decades=4.0):
    """Rejection sample root vectors with separation ratio <= M.

    Proposals are uniform in [-1, 1]^m; accepted vectors are rescaled to
    max-norm 10^U with U uniform in [-decades, 0].  Every quantity checked on
    these samples is invariant under lam -> s lam together with eps -> s eps,
    so the radial spread covers the small-eps regime at each fixed eps.
    """
    out = []
    while len(out) < n:
        u = rng.uniform(-1.0, 1.0, m)
        if not in_SM(u, M):
            continue
        r = 10.0 ** rng.uniform(-decades, 0.0)
        top = np.max(np.abs(u))
        out.append(u * (r / top) if top > 0 else u)
    return out


def identity_sweep(m, n_samples, rng, det_convention="stated", det_arithmetic="rational", entry_tol=1e-10,
                   det_tol=1e-8, rec_tol=1e-9, rec_eps=(1.0, 0.3, 0.1, 0.03)):
    """q0 factorisation, determinant formula and recursion over random roots in [-1, 1]^m."""
    worst = {"entry": 0.0, "recursion": 0.0}
    det_keys = ["det_residual_stated", "det_residual_exact"]
    if det_arithmetic == "rational":
        det_keys += ["det_residual_stated_rational", "det_residual_exact_rational"]
    worst.update({k: 0.0 for k in det_keys})
    det_fail = 0
    gate_key = f"det_residual_{det_convention}" + ("_rational" if det_arithmetic == "rational" else "")
    for lam in sample_box(rng, m, n_samples):
        q = build(lam)
        d = verify_q0_identity(q, det_tol=det_tol, det_convention=det_convention,
                               det_arithmetic=det_arithmetic).details
        worst["entry"] = max(worst["entry"], d["entry_residual"])
        for k in det_keys:
            worst[k] = max(worst[k], d[k])
        if d[gate_key] > det_tol:
            det_fail += 1
        if m >= 2:
            worst["recursion"] = max(worst["recursion"], verify_recursion(q, rec_eps).worst_ratio)
    f = math.factorial(m - 1)
    reports = [
        PropertyReport("q0_factorisation", n_samples, worst["entry"], float(f), worst["entry"] <= entry_tol,
                       {"m": m}),
        PropertyReport("q0_determinant", n_samples, worst[gate_key],
                       float(f ** (1 if det_convention == "stated" else m)), det_fail == 0,
                       {"m": m, "convention": det_convention, "arithmetic": det_arithmetic, "failures": det_fail,
                        **{"worst_" + k[len("det_residual_"):]: worst[k] for k in det_keys}}),
    ]
    if m >= 2:
        reports.append(PropertyReport("recursion", n_samples, worst["recursion"], 0.0, worst["recursion"] <= rec_tol,
                                      {"m": m}))
    return reports


def commutator_sweep(samples, eps_grid=DEFAULT_EPS, spread=4.0):
    """sup over samples of commutator ratio / eps for each eps; pass when the spread is <= ``spread``."""
    sup = np.zeros(len(eps_grid))
    for lam in samples:
        q = build(lam)
        for i, eps in enumerate(eps_grid):
            sup[i] = max(sup[i], commutator_ratio(q, eps)[0] / eps)
    ratio = float(sup.max() / sup.min()) if sup.min() > 0 else (1.0 if sup.max() == 0 else math.inf)
    return PropertyReport("commutator", len(samples), ratio, float(sup.max()), ratio <= spread,
                          {"sup_ratio_over_eps": sup.tolist(), "eps_grid": list(eps_grid)})


def resolvable_eps(eps_grid, m, floor=1e-10):
    """Grid values whose lower coercivity bound eps^(2(m-1)) is resolvable in double precision."""
    return tuple(e for e in eps_grid if e ** (2 * (m - 1)) >= floor)


def coercivity_sweep(samples, eps_grid=DEFAULT_EPS, spread=4.0):
    m = len(samples[0])
    grid = resolvable_eps(eps_grid, m)
    worst = 0.0
    C = 0.0
    for lam in samples:
        r = verify_coercivity(build(lam), grid, spread)
        worst = max(worst, r.worst_ratio)
        C = max(C, r.constant_estimate)
    return PropertyReport("coercivity", len(samples), worst, C, worst <= spread, {"eps_grid": list(grid)})


def refine_near_diagonal(samples, eps_grid, M, n_starts=5, maxiter=4000):
    """Local minimisation of the near-diagonal constant from the worst samples (diagnostic)."""

    def f(lam):
        r = lc_ratio(lam)
        if not math.isfinite(r) or r > M:
            return 1.0 + (r if math.isfinite(r) else 1e3)
        q = build(lam)
        return min(nearly_diagonal_eigmin(assemble(q, e)) for e in eps_grid)

    starts = sorted(samples, key=f)[:n_starts]
    best = math.inf
    for x0 in starts:
        res = scipy.optimize.minimize(f, x0, method="Nelder-Mead",
                                      options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": maxiter})
        best = min(best, float(res.fun))
    return best


def property_suite(m, n_samples=1000, M=10.0, eps_grid=DEFAULT_EPS, seed=0, det_convention="stated",
                   refine=False, det_arithmetic="rational"):
    """All algebraic property checks for one order m; returns a list of PropertyReport."""
    rng = np.random.default_rng([seed, m])
    reports = identity_sweep(m, n_samples, rng, det_convention, det_arithmetic)
    if m < 2:
        return reports
    samples = sample_SM(rng, m, 2 * n_samples, M)
    nd = near_diagonal_constant(samples, eps_grid, M)
    if refine:
        nd.details["c0_refined"] = refine_near_diagonal(samples, eps_grid, M)
    reports.append(nd)
    reports.append(commutator_sweep(samples[:n_samples], eps_grid))
    box = sample_box(rng, m, 2 * n_samples)
    reports.append(coercivity_sweep(box[: min(n_samples, 200)], eps_grid))
    reports.append(diag_product_sweep(box))
    for r in reports:
        r.details.setdefault("m", m)
    return reports
