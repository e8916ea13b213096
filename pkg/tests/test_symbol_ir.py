import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psifactor import symbol_ir as ir
from psifactor.symbol_ir import SampledCoefficient


def P(text, **kw):
    return ir.parse_symbol(text, dims=2, **kw)


def const_coef(value, n=16):
    return SampledCoefficient("c", ("y1",), np.full(n, float(value)), (2 * math.pi,))


def test_parse_grammar_with_coefficients():
    c = const_coef(2.0)
    b1 = const_coef(3.0)
    b1 = SampledCoefficient("b1", ("y1",), b1.samples, b1.periods)
    e = P("c(y1)*tau^2 - b1(y1)*xi1^2", coefficients={"c": c, "b1": b1})
    assert set(ir.coefficients_in(e)) == {"c", "b1"}
    assert ir.evaluate(e, {"y1": 0.3, "tau": 1.0, "xi1": 0.5}) == pytest.approx(2.0 - 0.75)


def test_parse_sqrt_over_sum():
    e = P("sqrt(tau^2 - xi1^2)")
    assert e.kind == "func" and e.data == "sqrt"
    assert e.children[0].kind == ir.ADD


def test_parse_syntax_error_offset():
    with pytest.raises(ir.SymbolSyntaxError) as info:
        P("tau^2 -")
    assert info.value.offset == 7


def test_unknown_identifier():
    with pytest.raises(ir.UnknownIdentifierError):
        P("q(y1)*tau")


def test_derivatives():
    d = ir.differentiate(P("tau^2 - xi1^2"), "xi1")
    pts = {"tau": 1.3, "xi1": 0.4}
    assert ir.evaluate(d, pts) == pytest.approx(-0.8)
    d2 = ir.differentiate(P("sqrt(tau^2 - xi1^2)"), "tau")
    assert ir.evaluate(d2, pts) == pytest.approx(1.3 / math.sqrt(1.3 ** 2 - 0.16))


def test_sampled_coefficient_derivative_matches_finite_differences():
    c = SampledCoefficient.from_function("c", ("y1",), lambda y: 2 + 0.5 * np.sin(y) + 0.1 * np.cos(2 * y), 64)
    e = P("c(y1)*tau^2", coefficients={"c": c})
    d = ir.differentiate(e, "y1")
    y = np.linspace(0.5, 5.5, 11)
    h = 1e-4
    fd = (ir.evaluate(e, {"y1": y + h, "tau": 1.5}) - ir.evaluate(e, {"y1": y - h, "tau": 1.5})) / (2 * h)
    assert np.max(np.abs(ir.evaluate(d, {"y1": y, "tau": 1.5}) - fd)) < 1e-6


def test_evaluate_examples():
    assert ir.evaluate(P("sqrt(4*tau^2 - xi1^2)"), {"tau": 1.0, "xi1": 0.0}) == pytest.approx(2.0)
    e = P("c(y1)*tau^2", coefficients={"c": const_coef(3.0)})
    assert ir.evaluate(e, {"y1": 1.0, "tau": 2.0}) == pytest.approx(12.0)


def test_ramp_midpoint_is_half():
    assert ir.ramp_values(np.array([0.5]), 0.0, 1.0)[0] == pytest.approx(0.5, abs=1e-15)
    e = ir.ramp(ir.var("xi1"), 0.2, 0.6)
    assert ir.evaluate(e, {"xi1": 0.4}) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(-3, 3), st.floats(0.05, 2))
def test_ramp_bounds_and_symmetry(s, w):
    v = ir.ramp_values(np.array([s]), 0.0, w)[0]
    assert 0.0 <= v <= 1.0
    mirror = ir.ramp_values(np.array([w - s]), 0.0, w)[0]
    assert v + mirror == pytest.approx(1.0, abs=1e-12)


def test_sqrt_of_negative_is_domain_error():
    with pytest.raises(ir.DomainError):
        ir.evaluate(P("sqrt(tau^2 - xi1^2)"), {"tau": 0.5, "xi1": 1.0})


def test_guard_skips_body_outside_cut():
    body = P("sqrt(tau^2 - xi1^2)")
    cut = ir.ramp(ir.sub(ir.var("tau"), ir.var("xi1")), 0.0, 0.1)
    v = ir.evaluate(ir.guard(cut, body), {"tau": np.array([0.5, 2.0]), "xi1": np.array([1.0, 0.0])})
    assert v[0] == 0 and v[1] == pytest.approx(2.0)


@pytest.mark.parametrize("text,deg", [("tau^2 - xi1^2", 2), ("sqrt(tau^2 - xi1^2)", 1), ("tau^2 - xi1", None)])
def test_homogeneous_degree(text, deg):
    got = ir.homogeneous_degree(P(text))
    assert got == deg


def test_simplify_identities():
    tau = ir.var("tau")
    assert ir.simplify(ir.add(ir.mul(0, ir.var("y1")), tau)) == tau
    e = P("tau^2 - xi1^2")
    assert ir.simplify(ir.add(e, 0)) == ir.simplify(e)
    assert ir.simplify(ir.div(e, 1)) == ir.simplify(e)


def test_text_roundtrip():
    e = P("(2 + sin(y1))*sqrt(tau^2 + xi1^2) - eps*omega*xi1^-2")
    back = P(ir.to_text(e))
    pts = {"y1": 0.7, "tau": 1.1, "xi1": 0.3}
    assert ir.evaluate(back, pts, 0.1, 2.0) == pytest.approx(ir.evaluate(e, pts, 0.1, 2.0))


exprs = st.sampled_from(["tau^2 - xi1^2", "sin(y1)*tau", "exp(xi1)*cos(y1)", "tau*xi1^3 + y1", "sqrt(4 + xi1^2)"])


@settings(max_examples=30, deadline=None)
@given(exprs, st.floats(-1, 1), st.floats(0.5, 2), st.floats(-1, 1))
def test_derivative_matches_finite_difference(text, y, tau, xi):
    e = P(text)
    pt = {"y1": y, "tau": tau, "xi1": xi}
    for v in ("y1", "tau", "xi1"):
        h = 1e-6
        hi, lo = dict(pt), dict(pt)
        hi[v] += h
        lo[v] -= h
        fd = (ir.evaluate(e, hi) - ir.evaluate(e, lo)) / (2 * h)
        assert ir.evaluate(ir.differentiate(e, v), pt) == pytest.approx(fd, rel=1e-5, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(exprs, st.floats(-1, 1), st.floats(0.5, 2), st.floats(-1, 1))
def test_simplify_preserves_value(text, y, tau, xi):
    e = ir.differentiate(P(text), "xi1", 2)
    pt = {"y1": y, "tau": tau, "xi1": xi}
    assert ir.evaluate(ir.simplify(e), pt) == pytest.approx(ir.evaluate(e, pt), rel=1e-12, abs=1e-12)


def test_mollified_constant_stays_constant():
    c = SampledCoefficient.from_function("c", ("y1",), lambda y: np.ones_like(y), 32, mollify=True)
    e = ir.coef(c)
    for eps in (0.5, 0.1, 0.01):
        v = ir.evaluate(e, {"y1": np.linspace(0, 6, 7)}, eps, math.log(math.e / eps))
        assert np.allclose(v, 1.0, atol=1e-12)
