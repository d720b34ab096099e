"""Problem description, characteristic roots and root-separation checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coeff_dsl import CoefficientExpr
from .errors import NonHyperbolic, UnsupportedOrder
from .symalg import MAX_ORDER
from .symmetriser import lc_ratio

ROOT_IMAG_TOL = 1e-7


@dataclass(frozen=True)
class ProblemSpec:
    """D_t^m u + sum_{p,gamma} a_{p,gamma}(t) D_x^gamma D_t^(m-p) u = 0 on [0, T].

    Coefficients are keyed by (p, gamma) where p = m - j is the order of the
    x-operator multiplying D_t^j and gamma is a multi-index of length n.
    Terms with |gamma| == p form the principal part, the rest are lower order.
    """

    m: int
    n: int
    T: float
    principal: dict = field(default_factory=dict)
    lower: dict = field(default_factory=dict)
    declared_k: object = "analytic"  # int, "analytic" or "smooth"
    R: float = 1.0
    smooth_k: int = 2
    name: str = ""

    def __post_init__(self):
        if not 1 <= self.m <= MAX_ORDER:
            raise ValueError(f"order m={self.m} outside [1, {MAX_ORDER}]")
        if self.n < 1:
            raise ValueError("space dimension must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        for table, principal in ((self.principal, True), (self.lower, False)):
            for (p, gamma), e in table.items():
                if not 1 <= p <= self.m:
                    raise ValueError(f"coefficient order {p} outside [1, {self.m}]")
                if len(gamma) != self.n:
                    raise ValueError(f"multi-index {gamma} has wrong length for n={self.n}")
                if min(gamma) < 0:
                    raise ValueError(f"negative multi-index {gamma}")
                deg = sum(gamma)
                if principal and deg != p:
                    raise ValueError(f"principal coefficient ({p}, {gamma}) needs |gamma| = {p}")
                if not principal and deg >= p:
                    raise ValueError(f"lower order coefficient ({p}, {gamma}) needs |gamma| < {p}")
                if not isinstance(e, CoefficientExpr):
                    raise TypeError("coefficients must be CoefficientExpr")

    @classmethod
    def from_table(cls, m, n, T, coefficients, **kw):
        """Split a single {(p, gamma): expr} table into principal and lower parts."""
        principal, lower = {}, {}
        for (p, gamma), e in coefficients.items():
            gamma = tuple(gamma) if not isinstance(gamma, int) else (gamma,)
            (principal if sum(gamma) == p else lower)[(p, gamma)] = e
        return cls(m, n, T, principal, lower, **kw)

    @property
    def k_value(self):
        if self.declared_k == "analytic":
            return None
        if self.declared_k == "smooth":
            return self.smooth_k
        return int(self.declared_k)

    def breakpoints(self):
        pts = set()
        for e in list(self.principal.values()) + list(self.lower.values()):
            pts.update(e.breakpoints())
        return sorted(p for p in pts if 0.0 < p < self.T)

    def check_real(self, n_samples=64):
        """Principal coefficients are real by construction; confirm they are finite on [0, T]."""
        ts = np.linspace(0.0, self.T, n_samples)
        for e in self.principal.values():
            for t in ts:
                e(t)
        return True


@dataclass
class LCReport:
    M_min: float
    worst_point: tuple
    hyperbolic: bool
    max_imag: float
    samples: int = 0

    @property
    def passed(self):
        return self.hyperbolic and math.isfinite(self.M_min)

    def to_dict(self):
        return {
            "id": "lc-check",
            "pass": bool(self.passed),
            "samples": int(self.samples),
            "constants": {"M_min": self.M_min, "max_imag": self.max_imag},
            "worst_case": {"t": self.worst_point[0], "xi": list(self.worst_point[1]) if self.worst_point[1] is not None else None},
        }


def bracket_xi(xi) -> float:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return math.sqrt(1.0 + float(xi @ xi))


def _xi_power(xi, gamma):
    out = 1.0
    for x, g in zip(xi, gamma):
        out *= x ** g
    return out


def symbol_part(spec, table, t, xi, p):
    """sum over |gamma| terms of order p: a_{p,gamma}(t) xi^gamma."""
    total = 0.0
    for (q, gamma), e in table.items():
        if q == p:
            total += e(t) * _xi_power(xi, gamma)
    return total


def principal_symbol(spec: ProblemSpec, t, xi) -> np.ndarray:
    """Coefficients (1, c_{m-1}, ..., c_0) of tau^m + sum_j c_j tau^j."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    coeffs = np.zeros(spec.m + 1)
    coeffs[0] = 1.0
    for p in range(1, spec.m + 1):
        coeffs[p] = symbol_part(spec, spec.principal, t, xi, p)
    return coeffs


def _companion_roots(c):
    # c = (1, c_1, ..., c_m), monic, descending powers
    m = len(c) - 1
    if m == 1:
        return np.array([-c[1]], dtype=complex)
    C = np.diag(np.ones(m - 1), 1)
    C[-1, :] = -c[:0:-1]
    return np.linalg.eigvals(C)


def _normalised_roots_imag(spec, t, xi, imag_tol=ROOT_IMAG_TOL):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    br = bracket_xi(xi)
    c = principal_symbol(spec, t, xi)
    # roots of the rescaled polynomial are the roots divided by <xi>
    chat = c / br ** np.arange(spec.m + 1)
    z = _companion_roots(chat)
    max_imag = float(np.max(np.abs(z.imag))) if len(z) else 0.0
    tol = imag_tol * (1.0 + float(np.linalg.norm(chat)))
    if max_imag > tol:
        raise NonHyperbolic(max_imag * br, t, tuple(xi))
    return np.sort(z.real), max_imag * br


def normalised_roots(spec: ProblemSpec, t, xi, imag_tol=ROOT_IMAG_TOL) -> np.ndarray:
    return _normalised_roots_imag(spec, t, xi, imag_tol)[0]


def roots(spec: ProblemSpec, t, xi, imag_tol=ROOT_IMAG_TOL) -> np.ndarray:
    lam, _ = _normalised_roots_imag(spec, t, xi, imag_tol)
    return np.sort(lam * bracket_xi(xi))


def pair_ratio(lam, coincide_tol=1e-6):
    """Root separation ratio where pairs closer than coincide_tol * max|lam| count as equal.

    Companion eigenvalues of a double root split by about sqrt(machine eps);
    without this merge a double root would report a large finite ratio.
    """
    lam = np.asarray(lam, dtype=float)
    scale = float(np.max(np.abs(lam))) if len(lam) else 0.0
    merged = lam.copy()
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            if abs(lam[i] - lam[j]) <= coincide_tol * scale:
                merged[j] = merged[i]
    return lc_ratio(merged)


def xi_points(xi_grid, n):
    pts = np.asarray(xi_grid, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if n == 1 else pts.reshape(1, -1)
    return pts


def lc_check(spec: ProblemSpec, t_grid, xi_grid, coincide_tol=1e-6, raise_nonhyperbolic=True) -> LCReport:
    pts = xi_points(xi_grid, spec.n)
    worst = -1.0
    worst_point = (None, None)
    max_imag = 0.0
    count = 0
    for xi in pts:
        if np.linalg.norm(xi) < spec.R:
            continue
        for t in t_grid:
            try:
                lam, im = _normalised_roots_imag(spec, t, xi)
            except NonHyperbolic as exc:
                if raise_nonhyperbolic:
                    raise
                return LCReport(math.inf, (float(t), tuple(map(float, xi))), False, exc.max_imag, count)
            max_imag = max(max_imag, im)
            r = pair_ratio(lam, coincide_tol)
            count += 1
            if r > worst:
                worst, worst_point = r, (float(t), tuple(map(float, xi)))
    return LCReport(max(worst, 0.0), worst_point, True, max_imag, count)


def _homog_coeffs(spec, t):
    if spec.n != 1:
        raise UnsupportedOrder("discriminant formulas need n = 1")
    if spec.m not in (2, 3):
        raise UnsupportedOrder(f"no discriminant formula for m = {spec.m}")
    return [symbol_part(spec, spec.principal, t, np.ones(1), p) for p in range(1, spec.m + 1)]


def discriminant(spec: ProblemSpec, t) -> float:
    a = _homog_coeffs(spec, t)
    if spec.m == 2:
        a1, a2 = a
        return a1 ** 2 - 4 * a2
    a1, a2, a3 = a
    return -4 * a2 ** 3 - 27 * a3 ** 2 + a1 ** 2 * a2 ** 2 - 4 * a1 ** 3 * a3 + 18 * a1 * a2 * a3


def discriminant_rhs(spec: ProblemSpec, t) -> float:
    """The comparison expression: a_1^2 for m = 2, (a_1 a_2 - 9 a_3)^2 for m = 3."""
    a = _homog_coeffs(spec, t)
    if spec.m == 2:
        return a[0] ** 2
    return (a[0] * a[1] - 9 * a[2]) ** 2


@dataclass
class LCEquivalentReport:
    c: float
    M_min: float
    consistent: bool
    worst_t: float | None
    samples: int

    def to_dict(self):
        return {
            "id": "lc-equivalent",
            "pass": bool(self.consistent),
            "samples": self.samples,
            "constants": {"c": self.c, "M_min": self.M_min},
            "worst_case": {"t": self.worst_t},
        }


def lc_equivalent_check(spec: ProblemSpec, t_grid, positive_tol=1e-12) -> LCEquivalentReport:
    c = math.inf
    worst_t = None
    for t in t_grid:
        d = discriminant(spec, t)
        rhs = discriminant_rhs(spec, t)
        if rhs == 0.0:
            continue
        r = d / rhs
        if r < c:
            c, worst_t = r, float(t)
    # both sides are 0-homogeneous in xi, so a unit frequency is enough
    lc = lc_check(spec, t_grid, np.array([[max(1.0, spec.R)]]), raise_nonhyperbolic=False)
    consistent = (c > positive_tol) == math.isfinite(lc.M_min)
    return LCEquivalentReport(c, lc.M_min, consistent, worst_t, len(t_grid))
