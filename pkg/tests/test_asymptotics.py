import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psifactor import asymptotics as asy
from psifactor import scale_nets as sn
from psifactor import symbol_ir as ir


def P(text):
    return ir.parse_symbol(text, dims=2)


SPEC = sn.SampleSpec(count=400)


def test_schedule_for_zero_terms():
    lad = sn.default_ladder()
    s = asy.borel_schedule(asy.ExpansionTerms((ir.ZERO,) * 4), lad, SPEC)
    assert s.mu == tuple(2.0 ** (-j - 1) for j in range(4))
    assert s.lam == s.mu


def test_schedule_single_term():
    lad = sn.default_ladder()
    s = asy.borel_schedule(asy.ExpansionTerms((P("tau"),), m=1), lad, SPEC)
    C = s.C1[(0, (0, 0), (0,))]
    assert s.mu[0] == pytest.approx(0.5 / C)


def test_schedule_formula():
    mu, lam = asy.schedule_from_constants([2.0 ** j for j in range(5)])
    assert mu == pytest.approx([2.0 ** (-2 * j - 1) for j in range(5)])


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8))
def test_schedule_strictly_decreasing(C1):
    mu, lam = asy.schedule_from_constants(C1)
    assert all(a > b for a, b in zip(mu, mu[1:]))
    assert all(0 < m <= 2.0 ** (-j - 1) / c * (1 + 1e-12) for j, (m, c) in enumerate(zip(mu, C1)))


def test_truncation_examples():
    t = asy.ExpansionTerms((P("tau"), ir.ONE))
    assert asy.truncate_expansion(t, 0) == ir.ZERO
    assert asy.truncate_expansion(t, 1) == P("tau")
    pt = {"tau": 1.7}
    assert ir.evaluate(asy.truncate_expansion(t, 2), pt, 0.1) == pytest.approx(1.8)


def test_borel_sum_zero_and_single_term():
    lad = sn.default_ladder()
    z = asy.ExpansionTerms((ir.ZERO,) * 3)
    assert ir.evaluate(asy.borel_sum(z, asy.borel_schedule(z, lad, SPEC)).expr, {"tau": 2.0, "xi1": 1.0, "y1": 0.0}, 0.01) == 0
    t = asy.ExpansionTerms((P("tau*(1 + xi1^2)^-1"), ir.ZERO), m=-1)
    s = asy.borel_schedule(t, lad, SPEC)
    b = asy.borel_sum(t, s)
    pts = {"tau": np.array([3.0, 10.0]), "xi1": np.array([4.0, 2.0]), "y1": 0.0}
    # once mu_0 / eps >= 2 the cutoff factor is 1 and the sum reproduces a0
    e = s.mu[0] / 4
    assert np.allclose(ir.evaluate(b.expr, pts, e, float(np.log(np.e / e))), ir.evaluate(t.terms[0], pts))


def test_borel_remainder_orders():
    lad = sn.default_ladder(3, 14)
    terms = asy.ExpansionTerms(tuple(P(f"sqrt(1 + tau^2 + xi1^2)^-{j}") if j else ir.ONE for j in range(5)), m=0)
    sch = asy.borel_schedule(terms, lad, SPEC)
    b = asy.borel_sum(terms, sch)
    for N in (1, 2, 3):
        rep = asy.verify_remainder(b, terms, N, lad, SPEC, regime=asy.regime_eps(sch, N + 1))
        assert rep.passes
        assert rep.fit.slope >= N - 0.5


def test_exact_remainder_is_negligible():
    lad = sn.default_ladder()
    a0 = P("tau^2 + xi1")
    terms = asy.ExpansionTerms((a0,), m=2)
    rep = asy.verify_remainder(sn.SymbolNet(a0), terms, 1, lad, SPEC, zero_floor=1e-14)
    assert rep.fit.exact_zero and rep.passes


def test_rescaling_keeps_exponent():
    lad = sn.default_ladder()
    terms = asy.ExpansionTerms(tuple(P(f"(2 + sin(y1))*cos(xi1)/{j + 1}") for j in range(3)), kind=2, m=0)
    a = sn.SymbolNet(asy.truncate_expansion(terms, 3))
    scaled = asy.ExpansionTerms(tuple(asy.rescale(t) for t in terms.terms), kind=2, m=0)
    sa = sn.SymbolNet(asy.rescale(a.expr))
    for N in (1, 2):
        r1 = asy.verify_remainder(a, terms, N, lad, SPEC)
        r2 = asy.verify_remainder(sa, scaled, N, lad, SPEC)
        assert r1.fit.slope == pytest.approx(N, abs=0.1)
        assert r2.fit.slope == pytest.approx(r1.fit.slope, abs=0.1)


def test_chi_is_a_smooth_step():
    s = ir.var("xi1")
    v = ir.evaluate(asy.chi(s), {"xi1": np.array([0.0, 0.5, 1.0, 2.0, 3.0])})
    assert v[0] == 0 and v[-1] == 1 and v[-2] == 1
    assert np.all(np.diff(v) >= 0)
