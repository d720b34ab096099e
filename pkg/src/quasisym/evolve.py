"""Frequency-mode evolution dV/dt = i (A_1 + B) V with quasi-symmetrised energy."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import NonSymmetricSpectrum, StepUnderflow, TooManyZeros
from .levi import lower_row, system_matrices
from .spectrum import ProblemSpec, bracket_xi, normalised_roots
from .symmetriser import assemble, build

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array(_A[6] + (0.0,))
_B4 = np.array((5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40))
_E = _B5 - _B4


@dataclass
class ModeTrajectory:
    xi: tuple
    t_samples: np.ndarray
    V: np.ndarray  # shape (len(t_samples), m), complex
    E_eps: np.ndarray
    eps_used: float
    accepted_steps: int
    rejected_steps: int
    V_norm2: np.ndarray = field(default=None)

    @property
    def growth(self):
        """|V(T)| / |V(0)|."""
        return float(np.linalg.norm(self.V[-1]) / np.linalg.norm(self.V[0]))


@dataclass
class Partition:
    xi: tuple
    taus: list
    N: int


def initial_mode(spec: ProblemSpec, g_hat, xi) -> np.ndarray:
    g_hat = np.asarray(g_hat, dtype=complex).reshape(-1)
    if len(g_hat) != spec.m:
        raise ValueError(f"need {spec.m} data values")
    br = bracket_xi(xi)
    return g_hat * br ** (spec.m - np.arange(1, spec.m + 1))


def epsilon_for(spec: ProblemSpec, xi) -> float:
    br = bracket_xi(xi)
    k = spec.k_value
    if k is None:
        return min(1.0, 1.0 / br)
    return min(1.0, br ** (-k / (k + 2 * (spec.m - 1))))


def mode_operator(spec: ProblemSpec, xi):
    """Return f(t) -> i (A_1 + B)(t, xi) as a dense complex matrix."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    m = spec.m
    br = bracket_xi(xi)
    # bottom row entry j: -sum_{p = m-j+1} a_{p,gamma}(t) xi^gamma <xi>^(j-m)
    terms = [[] for _ in range(m)]
    for table in (spec.principal, spec.lower):
        for (p, gamma), e in table.items():
            j = m - p + 1
            w = -float(np.prod(xi ** np.asarray(gamma))) * br ** (j - m)
            if w != 0.0:
                terms[j - 1].append((e, w))
    base = np.diag(np.full(m - 1, 1j * br), 1).astype(complex)

    def op(t):
        M = base.copy()
        for j in range(m):
            s = 0.0
            for e, w in terms[j]:
                s += w * e(t)
            M[m - 1, j] = 1j * s
        return M

    return op


def _segments(spec, t_out):
    stops = sorted(set(spec.breakpoints()) | set(float(x) for x in t_out))
    return [s for s in stops if s > 0.0]


def integrate_mode(spec: ProblemSpec, V0, xi, tol=1e-8, n_output=65, t_out=None, energy=True) -> ModeTrajectory:
    """Adaptive Dormand-Prince 5(4) on [0, T].

    The state is scaled to unit norm (the system is linear); each step keeps
    the local error estimate below tol * (1 + |V|).  Steps never cross a
    coefficient jump or an output time, and inside a segment [a, b) the right
    hand side is evaluated strictly left of b so the branch active on the
    segment is used throughout.
    """
    T = spec.T
    V0 = np.asarray(V0, dtype=complex).reshape(-1)
    scale = float(np.linalg.norm(V0))
    if t_out is None:
        t_out = np.linspace(0.0, T, n_output)
    t_out = np.asarray(t_out, dtype=float)
    if t_out[0] != 0.0 or abs(t_out[-1] - T) > 1e-15 * T or np.any(np.diff(t_out) <= 0):
        raise ValueError("output grid must increase strictly from 0 to T")
    op = mode_operator(spec, xi)
    out_V = np.zeros((len(t_out), spec.m), dtype=complex)
    out_V[0] = V0
    if scale == 0.0:
        traj_V = out_V
        acc = rej = 0
    else:
        y = V0 / scale
        lam0 = np.max(np.abs(normalised_roots(spec, 0.0, xi))) if spec.m > 0 else 0.0
        b0 = float(np.linalg.norm(lower_row(spec, 0.0, xi)))
        h = 0.1 / (1.0 + bracket_xi(xi) * (1.0 + lam0) + b0)
        h_min = 1e-14 * T
        acc = rej = 0
        t = 0.0
        out_idx = 1
        for stop in _segments(spec, t_out):
            t_left = np.nextafter(stop, -np.inf)
            k1 = op(t) @ y
            while t < stop:
                last = False
                if t + h >= stop or stop - (t + h) < 1e-12 * T:
                    h_try = stop - t
                    last = True
                else:
                    h_try = h
                ks = [k1]
                for s in range(1, 7):
                    ys = y + h_try * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
                    ts = min(t + _C[s] * h_try, t_left)
                    ks.append(op(ts) @ ys)
                y_new = y + h_try * sum(b * k for b, k in zip(_B5[:6], ks[:6]) if b != 0.0)
                err_vec = h_try * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
                norm_y = max(float(np.linalg.norm(y)), float(np.linalg.norm(y_new)))
                err = float(np.linalg.norm(err_vec)) / (tol * (1.0 + norm_y))
                if not np.isfinite(err):
                    err = math.inf
                if err <= 1.0:
                    acc += 1
                    t = stop if last else t + h_try
                    y = y_new
                    k1 = ks[6]
                    fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                    if not last or fac < 1.0:
                        h = h_try * fac
                else:
                    rej += 1
                    h = h_try * max(0.2, 0.9 * err ** -0.2)
                    if h < h_min:
                        raise StepUnderflow(f"step {h:.3e} below {h_min:.3e} at t={t}, xi={tuple(np.atleast_1d(xi))}")
            while out_idx < len(t_out) and t_out[out_idx] <= t + 1e-15 * T:
                out_V[out_idx] = y * scale
                out_idx += 1
        traj_V = out_V
    eps = epsilon_for(spec, xi)
    E = np.full(len(t_out), np.nan)
    if energy:
        for i, tt in enumerate(t_out):
            Q = assemble(build(normalised_roots(spec, tt, xi)), eps)
            E[i] = float(np.real(np.vdot(traj_V[i], Q @ traj_V[i])))
    return ModeTrajectory(
        tuple(map(float, np.atleast_1d(xi))),
        t_out,
        traj_V,
        E,
        eps,
        acc,
        rej,
        np.sum(np.abs(traj_V) ** 2, axis=1),
    )


def energy_bounds_check(traj: ModeTrajectory, spec: ProblemSpec) -> dict:
    """Sandwich constant and Gronwall-type growth constant for one trajectory."""
    m = spec.m
    eps = traj.eps_used
    E = traj.E_eps
    v2 = traj.V_norm2
    br = bracket_xi(traj.xi)
    nz = v2 > 0
    if not np.any(nz) or np.any(~np.isfinite(E)):
        return {"xi": list(traj.xi), "sandwich_C": 0.0, "growth_C": 0.0, "sandwich_ok": True, "denominator": 0.0}
    upper = float(np.max(E[nz] / v2[nz]))
    lower = float(np.max(eps ** (2 * (m - 1)) * v2[nz] / np.maximum(E[nz], np.finfo(float).tiny)))
    sandwich_C = max(upper, lower)
    k = spec.k_value
    if k is None:
        denom = math.log(1.0 / eps) + eps * br
    else:
        denom = eps ** (-2 * (m - 1) / k) + eps * br
    if E[0] > 0:
        growth = float(np.max(np.log(np.maximum(E, np.finfo(float).tiny) / E[0])))
    else:
        growth = 0.0
    return {
        "xi": list(traj.xi),
        "sandwich_C": sandwich_C,
        "growth_C": max(growth, 0.0) / denom if denom > 0 else 0.0,
        "sandwich_ok": bool(np.all(E >= 0) and math.isfinite(sandwich_C)),
        "denominator": denom,
    }


def energy_catalogue(reports, spread=4.0, floor=1e-12) -> dict:
    """Aggregate per-trajectory energy constants.

    The sandwich must hold with a finite constant on every trajectory; the
    Gronwall constant must stay within a factor ``spread`` across the
    catalogue.  The sandwich spread is reported but not gated.
    """
    out = {"pass": True}
    for key in ("sandwich_C", "growth_C"):
        vals = np.array([r[key] for r in reports], dtype=float)
        big = vals[vals > floor]
        # tiny constants (no growth) are compatible with any bound
        ratio = float(big.max() / big.min()) if len(big) else 1.0
        out[key] = float(vals.max()) if len(vals) else 0.0
        out[key + "_spread"] = ratio
    out["pass"] = out["growth_C_spread"] <= spread and all(r["sandwich_ok"] for r in reports)
    return out


def q_entries(spec, t, xi, eps):
    lam = normalised_roots(spec, t, xi)
    q = build(lam)
    return q.parts[0] if eps == 0 else assemble(q, eps)


def analytic_partition(spec: ProblemSpec, xi, eps=None, n_dense=1024, N_max=64, zero_rel=1e-13) -> Partition:
    """Split [0, T] at the interior zeros of the entries of Q_eps(t, xi).

    ``eps=None`` uses epsilon_for(spec, xi); ``eps=0`` inspects Q_0.
    """
    if eps is None:
        eps = epsilon_for(spec, xi)
    T = spec.T
    ts = np.linspace(0.0, T, n_dense)
    vals = np.array([q_entries(spec, t, xi, eps) for t in ts])
    m = spec.m
    scale = float(np.max(np.abs(vals))) or 1.0
    zeros = []
    for i in range(m):
        for j in range(i, m):
            f_s = vals[:, i, j]
            if np.max(np.abs(f_s)) <= zero_rel * scale:
                continue

            def f(t, i=i, j=j):
                return q_entries(spec, t, xi, eps)[i, j]

            for a in range(n_dense - 1):
                fa, fb = f_s[a], f_s[a + 1]
                if abs(fa) <= zero_rel * scale:
                    zeros.append(ts[a])
                elif fa * fb < 0:
                    zeros.append(scipy.optimize.brentq(f, ts[a], ts[a + 1], xtol=1e-12))
            if abs(f_s[-1]) <= zero_rel * scale:
                zeros.append(ts[-1])
            # touching zeros: local minima of |f| with a tiny value
            g = np.abs(f_s)
            for a in range(1, n_dense - 1):
                if g[a] <= g[a - 1] and g[a] <= g[a + 1] and g[a] <= 1e-3 * scale and g[a] > zero_rel * scale:
                    res = scipy.optimize.minimize_scalar(
                        lambda t: abs(f(t)), bounds=(ts[a - 1], ts[a + 1]), method="bounded", options={"xatol": 1e-12}
                    )
                    if abs(res.fun) <= 1e-10 * scale:
                        zeros.append(float(res.x))
    edge = 1e-9 * T
    interior = sorted(z for z in zeros if edge < z < T - edge)
    taus = [0.0]
    for z in interior:
        if z - taus[-1] > edge:
            taus.append(float(z))
    taus.append(float(T))
    N = len(taus) - 1
    if N > N_max:
        raise TooManyZeros(f"{N} intervals exceed the cap {N_max}")
    return Partition(tuple(map(float, np.atleast_1d(xi))), taus, N)


def dft_grid(N, L):
    """Angular frequencies of an N-point periodic grid of length L in FFT order."""
    return 2 * np.pi * np.fft.fftfreq(N, d=L / N)


def reconstruct(spec: ProblemSpec, field_: dict, t: float, L: float | None = None):
    """Physical u(t, x) from the first components of the mode trajectories (n = 1).

    ``field_`` maps frequency (float or 1-tuple) to ModeTrajectory on an FFT grid.
    Returns (x, u, imag_residue).  Data transform convention: g_hat = fft(g).
    """
    if spec.n != 1:
        raise ValueError("reconstruction is implemented for n = 1")
    keys = {float(np.atleast_1d(k)[0]): v for k, v in field_.items()}
    N = len(keys)
    xis = np.array(sorted(keys))
    if N == 0:
        return np.zeros(0), np.zeros(0), 0.0
    if L is None:
        step = np.min(np.diff(xis)) if N > 1 else 1.0
        L = 2 * np.pi / step
    grid = dft_grid(N, L)
    v1 = np.zeros(N, dtype=complex)
    for idx, xi in enumerate(grid):
        match = [k for k in keys if abs(k - xi) <= 1e-9 * max(1.0, abs(xi))]
        if not match:
            raise ValueError(f"frequency {xi} missing from the field")
        traj = keys[match[0]]
        hits = np.nonzero(np.isclose(traj.t_samples, t, rtol=0, atol=1e-12 * max(1.0, spec.T)))[0]
        if len(hits) == 0:
            raise ValueError(f"t={t} is not an output sample")
        v1[idx] = traj.V[hits[0], 0] * bracket_xi(xi) ** (1 - spec.m)
    u = np.fft.ifft(v1)
    norm = float(np.linalg.norm(u))
    resid = float(np.max(np.abs(u.imag))) if N else 0.0
    if resid > 1e-8 * max(norm, np.finfo(float).tiny) and norm > 0:
        warnings.warn(f"imaginary residue {resid:.3e} relative to |u| = {norm:.3e}", NonSymmetricSpectrum)
    x = np.arange(N) * L / N
    return x, u.real, resid
