"""Gevrey-type spectral data and fits of growth / decay laws in the frequency."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import InsufficientRange, NonDecaying, OverflowGuard
from .spectrum import bracket_xi

DEFAULT_THETAS = (1 / 4, 1 / 3, 1 / 2, 2 / 3, 1.0)
MIN_POINTS = 12
MIN_RANGE = 2.0 ** 6


@dataclass
class SpectralData:
    """Values g_hat(xi) stored as log-modulus and phase so extreme decay stays representable."""

    xi: np.ndarray  # shape (N, n)
    log_mag: np.ndarray
    phase: np.ndarray

    @property
    def values(self):
        with np.errstate(under="ignore", over="ignore"):
            return np.exp(self.log_mag + 1j * self.phase)

    @property
    def brackets(self):
        return np.array([bracket_xi(x) for x in self.xi])


@dataclass
class GrowthModel:
    kappa: float
    c_stretch: float
    theta: float
    fit_residual: float
    classification: str
    s_estimate: float | None = None
    a: float = 0.0
    se_kappa: float = 0.0
    se_c: float = 0.0
    per_theta_rss: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "c_stretch": self.c_stretch,
            "theta": self.theta,
            "classification": self.classification,
            "s_estimate": self.s_estimate,
            "fit_residual": self.fit_residual,
            "se_c": self.se_c,
            "se_kappa": self.se_kappa,
            "a": self.a,
        }


def _xi_array(xi_grid):
    xi = np.asarray(xi_grid, dtype=float)
    return xi.reshape(-1, 1) if xi.ndim == 1 else xi


def _phases(n, phase, rng):
    if phase == "constant":
        return np.zeros(n)
    if phase == "random":
        rng = np.random.default_rng(rng)
        return rng.uniform(-np.pi, np.pi, n)
    raise ValueError(f"unknown phase recipe {phase!r}")


def make_gevrey_data(s, delta, xi_grid, phase="constant", rng=None) -> SpectralData:
    if s < 1 or delta <= 0:
        raise ValueError("need s >= 1 and delta > 0")
    xi = _xi_array(xi_grid)
    br = np.array([bracket_xi(x) for x in xi])
    return SpectralData(xi, -delta * br ** (1.0 / s), _phases(len(xi), phase, rng))


def make_ultra_data(s, delta, xi_grid, xi_max, phase="constant", rng=None) -> SpectralData:
    if s < 1 or delta <= 0:
        raise ValueError("need s >= 1 and delta > 0")
    xi = _xi_array(xi_grid)
    br = np.array([bracket_xi(x) for x in xi])
    expo = delta * br ** (1.0 / s)
    inside = np.linalg.norm(xi, axis=1) <= xi_max
    if np.any(expo[inside] > 500):
        raise OverflowGuard(f"exponent {expo[inside].max():.1f} exceeds 500")
    log_mag = np.where(inside, expo, -np.inf)
    return SpectralData(xi, log_mag, _phases(len(xi), phase, rng))


def hermitian_phases(xi_grid, rng=None):
    """Random phases with phase(-xi) = -phase(xi) on a symmetric grid (real data)."""
    xi = _xi_array(xi_grid)
    rng = np.random.default_rng(rng)
    out = np.zeros(len(xi))
    seen = {}
    for i, x in enumerate(xi):
        key = tuple(np.round(x, 12))
        neg = tuple(np.round(-x, 12))
        if neg in seen:
            out[i] = -out[seen[neg]]
        elif not np.any(x):
            out[i] = 0.0
        else:
            out[i] = rng.uniform(-np.pi, np.pi)
        seen[key] = i
    return out


def theta_candidates_for(spec, base=DEFAULT_THETAS):
    """Default stretch exponents plus 1/sigma, sigma = 1 + k/(2(m-1)), for C^k problems."""
    out = set(float(x) for x in base)
    k = spec.k_value
    if k is not None and spec.m >= 2:
        out.add(1.0 / (1.0 + k / (2.0 * (spec.m - 1))))
    return tuple(sorted(out))


def _check_range(br):
    if len(br) < MIN_POINTS:
        raise InsufficientRange(f"need at least {MIN_POINTS} frequencies, got {len(br)}")
    # the range requirement is on |xi|, recovered from <xi>
    mag = np.sqrt(np.maximum(br ** 2 - 1.0, 0.0))
    if mag.min() <= 0 or mag.max() / mag.min() < MIN_RANGE * (1 - 1e-12):
        raise InsufficientRange(f"frequency range {mag.max() / max(mag.min(), 1e-300):.2f} below {MIN_RANGE}")


def fit_growth_arrays(br, y, theta_candidates=DEFAULT_THETAS, zero_tol=1e-9) -> GrowthModel:
    """Least squares of y = a + kappa log<xi> + c <xi>^theta, theta from a candidate list."""
    br = np.asarray(br, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_range(br)
    n = len(br)
    best = None
    rss_table = {}
    for theta in sorted(set(float(x) for x in theta_candidates)):
        if not 0 < theta <= 1:
            raise ValueError("theta candidates must lie in (0, 1]")
        X = np.column_stack([np.ones(n), np.log(br), br ** theta])
        col = np.linalg.norm(X, axis=0)
        beta_s, *_ = np.linalg.lstsq(X / col, y, rcond=None)
        beta = beta_s / col
        resid = y - X @ beta
        rss = float(resid @ resid)
        rss_table[theta] = rss
        if best is None or rss < best[0] * (1 - 1e-12):
            best = (rss, theta, beta, X)
    rss, theta, beta, X = best
    dof = max(n - 3, 1)
    s2 = rss / dof
    cov = s2 * np.linalg.pinv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    a, kappa, c = map(float, beta)
    se_c = float(se[2])
    # a stretched term too small to matter anywhere on the grid counts as zero
    negligible = abs(c) * br.max() ** theta <= zero_tol * (1.0 + float(np.max(np.abs(y))))
    if abs(c) <= 2 * se_c or negligible:
        cls, s_est = "polynomial_loss", None
    elif theta >= 1.0 and c > 0:
        cls, s_est = "superexponential", None
    else:
        cls, s_est = "gevrey_type", 1.0 / theta
    return GrowthModel(
        kappa, c, theta, math.sqrt(rss / n), cls, s_est, a, float(se[1]), se_c, rss_table
    )


def growth_samples(field_, t, R=1.0):
    """(brackets, log |V(t)|/|V(0)|) from a map xi -> ModeTrajectory, dropping |xi| < R."""
    rows = []
    for key, traj in field_.items():
        xi = np.atleast_1d(np.asarray(key if not hasattr(traj, "xi") else traj.xi, dtype=float))
        if np.linalg.norm(xi) < R:
            continue
        hits = np.nonzero(np.isclose(traj.t_samples, t, rtol=0, atol=1e-12 * max(1.0, traj.t_samples[-1])))[0]
        if len(hits) == 0:
            raise ValueError(f"t={t} is not an output sample")
        ratio = np.linalg.norm(traj.V[hits[0]]) / np.linalg.norm(traj.V[0])
        rows.append((bracket_xi(xi), math.log(ratio)))
    rows.sort()
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


def fit_growth(field_, t, theta_candidates=DEFAULT_THETAS, R=1.0) -> GrowthModel:
    br, y = growth_samples(field_, t, R)
    return fit_growth_arrays(br, y, theta_candidates)


def fit_decay_exponent(data, with_log=False, return_details=False):
    """Estimate s from data decaying like exp(-delta <xi>^(1/s)).

    The classical estimate regresses log(-log(|g|/|g_0|)) on log<xi>; it is
    biased because the reference point is subtracted.  It is used as the
    starting point of a least squares fit of
        -log(|g|/|g_0|) = delta (<xi>^p - <xi_0>^p) [+ kappa log(<xi>/<xi_0>)]
    and s = 1/p.
    """
    if isinstance(data, SpectralData):
        br, log_mag = data.brackets, np.asarray(data.log_mag, dtype=float)
    else:
        br, log_mag = (np.asarray(x, dtype=float) for x in data)
    order = np.argsort(br)
    br, log_mag = br[order], log_mag[order]
    if len(br) < MIN_POINTS:
        raise InsufficientRange(f"need at least {MIN_POINTS} frequencies, got {len(br)}")
    if not np.all(np.isfinite(log_mag)):
        raise NonDecaying("data must be strictly positive")
    z = log_mag[0] - log_mag[1:]
    x = br[1:]
    if np.any(z <= 0):
        raise NonDecaying("data does not decay below its value at the smallest frequency")
    slope = float(np.polyfit(np.log(x), np.log(z), 1)[0])
    p0 = min(max(slope, 0.05), 2.0)
    b0 = br[0]

    def model(params):
        logd, p = params[0], params[1]
        out = math.exp(logd) * (x ** p - b0 ** p)
        if with_log:
            out = out + params[2] * np.log(x / b0)
        return out

    denom = np.maximum(np.abs(z), 1e-300)
    d0 = float(np.median(z / (x ** p0 - b0 ** p0)))
    start = [math.log(max(d0, 1e-300)), p0] + ([0.0] if with_log else [])
    res = scipy.optimize.least_squares(
        lambda q: (model(q) - z) / denom, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000
    )
    p = float(res.x[1])
    if p <= 0:
        raise NonDecaying("fitted decay exponent is not positive")
    s = 1.0 / p
    if return_details:
        return s, {"seed_slope": slope, "delta": math.exp(res.x[0]), "p": p, "kappa": float(res.x[2]) if with_log else 0.0}
    return s


def evolved_decay_data(data: SpectralData, field_, t) -> SpectralData:
    """Spectral data multiplied by the mode growth |V(t)|/|V(0)| of each frequency."""
    log_mag = np.array(data.log_mag, dtype=float)
    for i, x in enumerate(data.xi):
        key = tuple(map(float, x))
        traj = field_[key] if key in field_ else field_[float(x[0])]
        hits = np.nonzero(np.isclose(traj.t_samples, t, rtol=0, atol=1e-12 * max(1.0, traj.t_samples[-1])))[0]
        if len(hits) == 0:
            raise ValueError(f"t={t} is not an output sample")
        log_mag[i] += math.log(np.linalg.norm(traj.V[hits[0]]) / np.linalg.norm(traj.V[0]))
    return SpectralData(data.xi, log_mag, data.phase)
