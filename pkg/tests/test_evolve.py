import cmath
import math
import warnings

import numpy as np
import pytest
import scipy.linalg

from quasisym.coeff_dsl import parse
from quasisym.errors import NonSymmetricSpectrum, TooManyZeros
from quasisym.evolve import (
    analytic_partition,
    dft_grid,
    energy_bounds_check,
    energy_catalogue,
    epsilon_for,
    initial_mode,
    integrate_mode,
    mode_operator,
    reconstruct,
)
from quasisym.spectrum import ProblemSpec, bracket_xi


def make(table, m=2, T=1.0, **kw):
    return ProblemSpec.from_table(m, 1, T, {k: parse(v) for k, v in table.items()}, **kw)


DOUBLE = make({(1, (1,)): "-2*t", (2, (2,)): "t^2"})
STRICT = make({(2, (2,)): "-1"})
EX1 = make({(2, (2,)): "-t^2", (2, (1,)): "t/2"})


def double_root_oracle(xi, T):
    """Mode vector at T for V0 = e_1, from u = exp(i xi t^2 / 2) w with w'' + i xi w = 0."""
    br = bracket_xi([xi])
    mu = cmath.sqrt(-1j * xi)
    u0 = 1.0 / br
    w, dw = u0 * cmath.cosh(mu * T), u0 * mu * cmath.sinh(mu * T)
    ph = cmath.exp(1j * xi * T * T / 2)
    u, du = ph * w, ph * (dw + 1j * xi * T * w)
    return np.array([br * u, -1j * du])


@pytest.mark.parametrize("xi", [64.0, 256.0, 1024.0])
def test_double_root_closed_form(xi):
    traj = integrate_mode(DOUBLE, [1.0, 0.0], [xi], tol=1e-10, n_output=3, energy=False)
    want = double_root_oracle(xi, 1.0)
    assert abs(np.linalg.norm(traj.V[-1]) / np.linalg.norm(want) - 1) <= 0.01
    assert abs(abs(traj.V[-1][0]) / abs(want[0]) - 1) <= 0.01
    assert np.linalg.norm(traj.V[-1] - want) <= 1e-5 * np.linalg.norm(want)


def test_strictly_hyperbolic_closed_form():
    tol = 1e-9
    xi = 1.0
    traj = integrate_mode(STRICT, [1.0, 0.0], [xi], tol=tol, n_output=9, energy=False)
    A = mode_operator(STRICT, [xi])(0.0)
    for t, v in zip(traj.t_samples, traj.V):
        want = scipy.linalg.expm(A * t) @ np.array([1.0, 0.0])
        assert np.linalg.norm(v - want) <= 10 * tol
    # |V| bounded by cond of the diagonalising matrix
    w, S = np.linalg.eig(mode_operator(STRICT, [30.0])(0.0))
    traj = integrate_mode(STRICT, [0.3, 1.0], [30.0], n_output=33, energy=False)
    bound = np.linalg.cond(S) * np.linalg.norm([0.3, 1.0])
    assert np.all(np.linalg.norm(traj.V, axis=1) <= bound * (1 + 1e-8))


def test_zero_system_is_constant():
    s = make({}, m=3)
    traj = integrate_mode(s, [1.0, 2.0j, -3.0], [10.0], n_output=5, energy=False)
    # only the <xi> superdiagonal survives, so V_3 is constant and V_1, V_2 are polynomial in t
    assert np.allclose(traj.V[:, 2], -3.0)
    s1 = make({}, m=1)
    traj1 = integrate_mode(s1, [1.5 - 1j], [10.0], n_output=5)
    assert np.array_equal(traj1.V[:, 0], np.full(5, 1.5 - 1j))


def test_linearity():
    tol = 1e-9
    xi = [40.0]
    V0 = np.array([1.0, 0.5j])
    W0 = np.array([-0.3, 2.0])
    a, b = 0.7 - 0.2j, 1.3
    tv = integrate_mode(EX1, V0, xi, tol=tol, energy=False).V
    tw = integrate_mode(EX1, W0, xi, tol=tol, energy=False).V
    tc = integrate_mode(EX1, a * V0 + b * W0, xi, tol=tol, energy=False).V
    scale = np.max(np.abs(tv)) + np.max(np.abs(tw))
    assert np.max(np.abs(tc - (a * tv + b * tw))) <= 10 * tol * scale


def test_convergence_order():
    xi = [64.0]
    ref = integrate_mode(EX1, [1.0, 0.0], xi, tol=1e-13, n_output=2, energy=False).V[-1]
    steps, errs = [], []
    for tol in (1e-5, 1e-6, 1e-7, 1e-8):
        tr = integrate_mode(EX1, [1.0, 0.0], xi, tol=tol, n_output=2, energy=False)
        steps.append(tr.accepted_steps + tr.rejected_steps)
        errs.append(np.linalg.norm(tr.V[-1] - ref))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    order = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert order >= 4.0


def test_piecewise_scalar_is_exact():
    s = make({(1, (1,)): "piece([0.3], [1, 3])", (1, (0,)): "piece([0.55], [0.5, -2])"}, m=1)
    xi = 7.0
    traj = integrate_mode(s, [1.0], [xi], tol=1e-12, n_output=3, energy=False)
    # dV/dt = -i (a(t) xi + b(t)) V
    phase = xi * (0.3 * 1 + 0.7 * 3) + (0.55 * 0.5 + 0.45 * -2)
    assert abs(traj.V[-1, 0] - cmath.exp(-1j * phase)) <= 1e-10


def test_initial_mode():
    s = make({(2, (2,)): "-1"})
    assert np.allclose(initial_mode(s, [1, 0], [3.0]), [math.sqrt(10), 0])
    assert np.allclose(initial_mode(s, [2, 5j], [0.0]), [2, 5j])
    assert np.allclose(initial_mode(make({}, m=1), [4 - 1j], [9.0]), [4 - 1j])
    with pytest.raises(ValueError):
        initial_mode(s, [1, 2, 3], [1.0])


def test_epsilon_for():
    ck = make({(2, (2,)): "-t^2"}, declared_k=2)
    xi = math.sqrt(100 ** 2 - 1)
    assert epsilon_for(ck, [xi]) == pytest.approx(0.1)
    an = make({(2, (2,)): "-t^2"})
    assert epsilon_for(an, [math.sqrt(50 ** 2 - 1)]) == pytest.approx(0.02)
    assert epsilon_for(an, [0.0]) == 1.0 and epsilon_for(ck, [0.0]) == 1.0
    smooth = make({(2, (2,)): "-t^2"}, declared_k="smooth", smooth_k=6)
    assert epsilon_for(smooth, [xi]) == pytest.approx(100 ** (-6 / 8))


def test_energy_zero_system_passes():
    s = make({}, m=2)
    traj = integrate_mode(s, [1.0, 0.0], [0.0], n_output=9)
    rep = energy_bounds_check(traj, s)
    assert rep["sandwich_ok"] and rep["growth_C"] == 0.0
    assert energy_catalogue([rep, rep])["pass"]


def test_energy_sandwich_holds_example1():
    reports = []
    for xi in (16.0, 64.0, 256.0):
        traj = integrate_mode(EX1, [1.0, 0.0], [xi], n_output=33)
        assert np.all(traj.E_eps >= 0)
        reports.append(energy_bounds_check(traj, EX1))
    assert all(r["sandwich_ok"] and math.isfinite(r["sandwich_C"]) for r in reports)
    cat = energy_catalogue(reports)
    assert "growth_C_spread" in cat and "sandwich_C_spread" in cat


def test_energy_catalogue_gate():
    ok = {"sandwich_C": 1.0, "growth_C": 1.0, "sandwich_ok": True}
    far = {"sandwich_C": 1.0, "growth_C": 5.0, "sandwich_ok": True}
    assert energy_catalogue([ok, dict(ok, growth_C=3.9)])["pass"]
    assert not energy_catalogue([ok, far])["pass"]
    assert not energy_catalogue([ok, dict(ok, sandwich_ok=False)])["pass"]
    # vanishing growth constants are not counted in the spread
    assert energy_catalogue([ok, dict(ok, growth_C=0.0)])["pass"]


def test_partition_examples():
    xi = [64.0]
    assert analytic_partition(EX1, xi).taus == [0.0, 1.0]
    assert analytic_partition(make({(2, (2,)): "-t^2"}), xi, eps=0).taus == [0.0, 1.0]
    # q_0,12 = -(lam_1 + lam_2) changes sign with sin(10 t)
    osc = make({(1, (1,)): "sin(10*t)"})
    p = analytic_partition(osc, xi, eps=0)
    assert p.N == 4
    assert np.allclose(p.taus[1:-1], [math.pi / 10, 2 * math.pi / 10, 3 * math.pi / 10], atol=1e-10)
    # touching zeros of q_0,11 = 2 sin^2(10 t) xi^2 / <xi>^2 are found too
    touch = make({(2, (2,)): "-sin(10*t)^2"})
    pt = analytic_partition(touch, xi, eps=0)
    assert np.allclose(pt.taus[1:-1], [math.pi / 10, 2 * math.pi / 10, 3 * math.pi / 10], atol=1e-6)


def test_partition_cap():
    osc = make({(1, (1,)): "sin(200*t)"})
    with pytest.raises(TooManyZeros):
        analytic_partition(osc, [64.0], eps=0, N_max=8)


def _field(spec, g, L=2 * math.pi):
    N = len(g)
    gh = np.fft.fft(g)
    field = {}
    for xi, v in zip(dft_grid(N, L), gh):
        V0 = initial_mode(spec, [v, 0.0], [xi])
        field[float(xi)] = integrate_mode(spec, V0, [xi], n_output=5, energy=False)
    return field


def test_reconstruct_initial_time():
    N = 16
    x = np.arange(N) * 2 * math.pi / N
    g = np.cos(3 * x) + 0.5 * np.sin(x)
    xs, u, resid = reconstruct(EX1, _field(EX1, g), 0.0)
    assert np.allclose(xs, x)
    assert np.max(np.abs(u - g)) <= 1e-10
    _, u0, _ = reconstruct(EX1, _field(EX1, np.zeros(N)), 0.5)
    assert np.all(u0 == 0)


def test_reconstruct_warns_on_asymmetric_spectrum():
    N = 8
    spec = STRICT
    field = {}
    for xi in dft_grid(N, 2 * math.pi):
        v = 1.0 if xi == 1.0 else 0.0
        field[float(xi)] = integrate_mode(spec, [v, 0.0], [xi], n_output=3, energy=False)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        reconstruct(spec, field, 0.0)
    assert any(issubclass(x.category, NonSymmetricSpectrum) for x in w)
