import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasisym.coeff_dsl import parse
from quasisym.errors import LevelOutOfRange
from quasisym.levi import (
    admissibility_table,
    admissible_level,
    default_deltas,
    lemma53_ratio,
    levi_lb_check,
    levi_refinement_check,
    region_diagnostics,
    relaxed_levi_check,
    sigma_weights,
    system_matrices,
    wbv_sup,
    wbv_sup_detail,
    zero_row_commutator,
)
from quasisym.spectrum import ProblemSpec, bracket_xi, normalised_roots
from quasisym.suite import sample_SM
from quasisym.symalg import w_matrix
from quasisym.symmetriser import build


def make(table, m=2, **kw):
    return ProblemSpec.from_table(m, 1, 1.0, {k: parse(v) for k, v in table.items()}, **kw)


TS = np.linspace(0, 1, 17)
XS = np.geomspace(4, 4096, 7)


def test_system_matrices_example1():
    s = make({(2, (2,)): "-t^2", (2, (1,)): "t/2", (2, (0,)): "3", (1, (0,)): "5"})
    t, xi = 0.6, 7.0
    br = bracket_xi([xi])
    sm = system_matrices(s, t, [xi])
    assert np.allclose(sm.A1, [[0, br], [t * t * xi * xi / br, 0]], rtol=1e-14)
    assert np.allclose(sm.b_row, [-(t / 2 * xi + 3) / br, -5], rtol=1e-14)
    assert np.array_equal(sm.B[0], [0, 0])
    assert np.allclose(sm.total, sm.A1 + sm.B)


def test_system_matrices_trivial():
    s = make({(2, (2,)): "-t^2"})
    assert not np.any(system_matrices(s, 0.3, [5.0]).B)
    s1 = make({(1, (1,)): "2"}, m=1)
    sm = system_matrices(s1, 0.3, [5.0])
    assert sm.A1.shape == (1, 1)
    assert sm.A1[0, 0] == pytest.approx(-2 * 5.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_levi_constant_example1(alpha):
    s = make({(2, (2,)): "-t^2", (2, (1,)): f"{alpha}*t"})
    rep = levi_lb_check(s, TS, XS)
    assert rep.passed
    # |alpha t xi|^2 against the weight sum 2 t^2 xi^2
    assert rep.per_j_constant[0] == pytest.approx(alpha ** 2 / 2, rel=1e-10)
    assert rep.per_j_constant[1] == 0.0


def test_levi_failure_constant_lower_term():
    s = make({(2, (2,)): "-t^2", (2, (1,)): "1"})
    rep = levi_lb_check(s, TS, XS)
    assert rep.per_j_constant[0] == math.inf and not rep.passed
    # on a grid that avoids t = 0 the constant grows like 1/t^2
    r1 = levi_lb_check(s, [0.1], XS).global_C
    r2 = levi_lb_check(s, [0.01], XS).global_C
    assert r2 / r1 == pytest.approx(100.0, rel=0.01)


def test_levi_zero_lower():
    rep = levi_lb_check(make({(2, (2,)): "-t^2"}), TS, XS)
    assert rep.per_j_constant == [0.0, 0.0] and rep.wbv_constant == 0.0


def test_wbv_sup_examples():
    assert wbv_sup((1.0, 2.0), (0, 0)) == 0.0
    assert wbv_sup((0.3,), (2.5 - 1j,)) == pytest.approx(abs(2.5 - 1j))
    # W = [[1, 1], [-1, 1]], |WBV| = sqrt(2)|V_1|, |WV|^2 = 2|V|^2
    pencil, sampled = wbv_sup_detail((1.0, -1.0), (1.0, 0.0), n_samples=2000, rng=0)
    assert pencil == pytest.approx(1.0, rel=1e-10)
    assert sampled <= pencil and sampled == pytest.approx(1.0, rel=1e-2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=4), st.data())
def test_wbv_pencil_dominates_samples(lam, data):
    m = len(lam)
    row = data.draw(st.lists(st.floats(-2, 2), min_size=m, max_size=m))
    pencil, sampled = wbv_sup_detail(lam, row, n_samples=64, rng=1)
    assert pencil >= sampled - 1e-8 * max(1.0, sampled)


def test_region_diagnostics():
    lam = (1.0, 2.0, 3.0)
    d = region_diagnostics(lam, (1, 0, 0), np.array([0, 0, 1.0]), deltas=[1e6, 1e6])
    assert d["region"] == 3 and d["dominant"] == pytest.approx(3.0)
    d1 = region_diagnostics(lam, (1, 0, 0), np.array([1.0, 0, 0]), deltas=[10, 10])
    assert d1["region"] == 1
    assert default_deltas(3) == [100.0, 10.0]
    with pytest.raises(ValueError):
        region_diagnostics(lam, (0, 0, 0), np.ones(3), deltas=[1.0])


def test_region_one_bound():
    lam = (1.0, 2.0, 3.0)
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(500):
        V = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        V[1:] *= 1e-3
        d = region_diagnostics(lam, (1, 0, 0), V, deltas=[10, 10])
        if d["region"] == 1:
            ratios.append(d["wv2"] / d["dominant"])
    assert ratios and min(ratios) > 0.1


def test_sigma_weights():
    s = sigma_weights((1.0, 2.0, 3.0))
    # pi_i lam = (2,3), (1,3), (1,2): sigma_2 = 6, 3, 2 and sigma_1 = -5, -4, -3
    assert np.allclose(s, [36 + 9 + 4, 25 + 16 + 9, 3])


def test_admissibility():
    assert admissible_level(2, 2, 0)
    assert not admissible_level(3, 12, 1)
    assert admissible_level(3, 12, 2)
    assert admissibility_table(3, 6) == {0: False, 1: True}


def test_relaxed_levi():
    s = make({(2, (2,)): "-t^2", (2, (1,)): "t"}, declared_k=2)
    full = levi_lb_check(s, TS, XS)
    r = relaxed_levi_check(s, 0, TS, XS)
    assert r.per_j_constant == pytest.approx(full.per_j_constant)
    assert r.details["admissible"] and r.passed
    assert r.details["smooth_h0_bound"] == pytest.approx(3.0)
    with pytest.raises(LevelOutOfRange):
        relaxed_levi_check(s, 1, TS, XS)
    s3 = make({(3, (3,)): "0", (3, (1,)): "1"}, m=3, declared_k=12)
    r3 = relaxed_levi_check(make({(3, (3,)): "0"}, m=3, declared_k=12), 1, TS, XS)
    assert not r3.details["admissible"] and not r3.passed
    # the bottom level term is ignored at h = 0
    r0 = relaxed_levi_check(s3, 0, [0.5], XS)
    assert r0.per_j_constant[0] == 0.0


def test_zero_row_commutator_exact():
    rng = np.random.default_rng(4)
    for m in (2, 3, 4):
        lam = rng.uniform(-1, 1, m)
        row = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        for C in zero_row_commutator(lam, row, 0.3):
            assert np.all(C == 0)


def lemma53_inf(lam, k):
    """Exact inf over V of the ratio: squared distance of column k of W from the span of later columns."""
    W = w_matrix(lam)
    col = W[:, k - 1]
    rest = W[:, k:]
    if rest.shape[1]:
        coef, *_ = np.linalg.lstsq(rest, -col, rcond=None)
        resid = col + rest @ coef
    else:
        resid = col
    return float(resid @ resid) / float(col @ col)


def test_lemma53_two_roots_closed_form():
    # m = 2: inf = (a - b)^2 / (2 (a^2 + b^2)), at least 1 / (2M) on S_M
    a, b = 0.7, -0.2
    assert lemma53_inf((a, b), 1) == pytest.approx((a - b) ** 2 / (2 * (a * a + b * b)))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_lemma53_constant_positive_and_stable(m):
    M = 10.0
    rng = np.random.default_rng(m)
    lams = sample_SM(rng, m, 2000, M, decades=0.0)
    vals = np.array([min(lemma53_inf(lam, k) for k in range(1, m + 1)) for lam in lams])
    half, full = vals[:1000].min(), vals.min()
    assert full > 0
    assert (half - full) / half <= 0.25
    if m == 2:
        assert full >= 1 / (2 * M) * (1 - 1e-12)
    # sampled V never beat the exact infimum
    for lam in lams[:50]:
        for k in range(1, m + 1):
            V = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            assert lemma53_ratio(lam, V, k) >= lemma53_inf(lam, k) * (1 - 1e-9)


def test_strictly_hyperbolic_shortcut():
    s = make({(2, (2,)): "-1", (2, (1,)): "1", (1, (0,)): "2"})
    rep = levi_lb_check(s, TS, XS)
    assert rep.passed and math.isfinite(rep.wbv_constant)
    for t in TS:
        lam = normalised_roots(s, t, [64.0])
        assert np.min(np.diag(build(lam).parts[0])) > 0


def test_refinement_check():
    s = make({(2, (2,)): "-t^2", (2, (1,)): "t/2"})
    fine = (np.linspace(0, 1, 33), np.geomspace(4, 4096, 13))
    rep = levi_refinement_check(s, ((TS, XS), fine))
    assert rep.passed
    assert rep.details["refinement_ratio_C"] <= 2.0
    bad = make({(2, (2,)): "-t^2", (2, (1,)): "1"})
    assert not levi_refinement_check(bad, ((TS, XS), fine)).passed
