import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psifactor import calculus as calc
from psifactor import scale_nets as sn
from psifactor import symbol_ir as ir
from psifactor.symbol_ir import SampledCoefficient


def P(text, **kw):
    return ir.parse_symbol(text, dims=2, **kw)


def plan1d(n=64, **params):
    g = calc.grid(["y1"], n)
    return g, calc.QuantizationPlan(g, {"y1": "xi1"}, dict({"tau": 1.0}, **params))


def mollified_c(amp=0.5, n=64):
    c = SampledCoefficient.from_function("c", ("y1",), lambda y: 2 + amp * np.sin(y), n, mollify=True)
    return c


def test_identity_symbol():
    g, plan = plan1d()
    u = np.exp(np.sin(g.coords(0))) + 0j
    assert np.allclose(calc.apply_symbol(ir.ONE, u, plan, 0.1, 2.0), u, atol=1e-12)


@pytest.mark.parametrize("k", [-5, 1, 7])
def test_xi_eigenfunction(k):
    g, plan = plan1d()
    x = g.coords(0)
    u = np.exp(1j * k * x)
    eps = 0.125
    assert np.allclose(calc.apply_symbol(ir.var("xi1"), u, plan, eps, 1.0), eps * k * u, atol=1e-12)


def test_against_direct_summation():
    g, plan = plan1d(32)
    c = mollified_c(n=32)
    a = P("c(y1)*tau^2 + sin(y1)*xi1^2", coefficients={"c": c})
    x = g.coords(0)
    u = np.exp(np.cos(x)) * np.exp(3j * x)
    for eps in (0.25, 0.05):
        w = math.log(math.e / eps)
        fast = calc.apply_symbol(a, u, plan, eps, w)
        slow = calc.direct_apply(a, u, plan, eps, w)
        assert np.max(np.abs(fast - slow)) <= 1e-10 * np.max(np.abs(slow))


def test_composition_examples():
    x_xi = calc.compose_expr(ir.var("xi1"), ir.var("y1"), 3, 2)
    pt = {"y1": 0.4, "xi1": 1.3}
    assert ir.evaluate(x_xi, pt, 0.1) == pytest.approx(0.4 * 1.3 - 0.1j)
    assert ir.evaluate(calc.compose_expr(ir.var("y1"), ir.var("xi1"), 3, 2), pt, 0.1) == pytest.approx(0.52)
    a, b = P("1 + xi1^2"), P("sqrt(2 + xi1^2)")
    assert ir.evaluate(calc.compose_expr(a, b, 3, 2), pt, 0.3) == pytest.approx(ir.evaluate(ir.mul(a, b), pt))


def test_compose_residual_decays():
    g, plan = plan1d(128)
    c = mollified_c(n=128)
    a = P("c(y1)*tau^2", coefficients={"c": c})
    b = P("exp(i*cos(y1))*(1 + xi1^2)")
    u = calc.GridFunction(g, (1.0,), np.exp(np.sin(g.coords(0)))[None] + 0j)
    lad = sn.make_ladder([2.0 ** -j for j in range(3, 9)])
    rep = calc.operator_residual(calc.compose_expr(b, a, 3, 2), b, a, u, lad, plan)
    assert rep.fit.passes(2.5)


def test_residual_trivial_cases():
    g, plan = plan1d(64)
    u = calc.GridFunction(g, (1.0,), np.exp(np.sin(g.coords(0)))[None] + 0j)
    lad = sn.make_ladder([2.0 ** -j for j in range(3, 8)])
    b = P("(2 + sin(y1))*xi1")
    assert np.all(calc.operator_residual(b, ir.ONE, b, u, lad, plan).values <= 1e-13)
    a, b = P("2*tau^2"), P("1 + xi1^2")
    rep = calc.operator_residual(calc.compose_expr(a, b, 1, 2), a, b, u, lad, plan)
    assert np.all(rep.values <= 1e-12)


def test_parametrix_constant():
    r = calc.parametrix([ir.const(2.0)], 3, 0.0, 2)
    assert ir.evaluate(r.expr(3), {"tau": 1.0, "xi1": 0.2, "y1": 0.0}, 0.1) == pytest.approx(0.5)
    assert all(ir.simplify(t) == ir.ZERO for t in r.terms[1:])


def test_parametrix_y_free():
    p = P("sqrt(tau^2 + xi1^2)")
    r = calc.parametrix([p], 3, 1.0, 2)
    pt = {"tau": 1.0, "xi1": 0.7, "y1": 0.3}
    assert ir.evaluate(r.terms[0], pt) == pytest.approx(1 / math.sqrt(1.49))
    for t in r.terms[1:]:
        assert ir.evaluate(t, pt, 0.1) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("side", ["left", "right"])
def test_parametrix_variable(side):
    c = mollified_c()
    p = P("c(y1)*sqrt(tau^2 + xi1^2)", coefficients={"c": c})
    spec = sn.SampleSpec(count=300, K=1.0, R_max=8.0)
    pts = spec.points()
    lad = sn.make_ladder([2.0 ** -j for j in range(3, 9)])
    for N in (1, 2):
        q = calc.parametrix([p], N, 1.0, 2, side=side).expr(N)
        prod = calc.compose_expr(q, p, N, 2) if side == "left" else calc.compose_expr(p, q, N, 2)
        vals = [np.max(np.abs(ir.evaluate(ir.sub(prod, 1), pts, e, w))) for e, w in lad]
        assert sn.classify_growth(vals, lad, zero_floor=1e-13).passes(N)


def test_parametrix_requires_ellipticity():
    with pytest.raises(calc.CalculusError):
        calc.parametrix([P("xi1")], 1, 1.0, 2, samples=sn.SampleSpec(count=200))


def test_grid_function_roundtrip(tmp_path):
    g = calc.grid(["y1", "y2"], (8, 4))
    data = np.random.default_rng(0).standard_normal((2, 8, 4)) + 1j
    gf = calc.GridFunction(g, (0.5, 0.25), data)
    path = calc.write_grid_function(gf, tmp_path / "u")
    back = calc.read_grid_function(path)
    assert back.grid == g and back.eps == gf.eps
    assert np.array_equal(back.data, gf.data)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.02, 0.5), st.floats(-2, 2), st.floats(-2, 2))
def test_linearity(eps, s, t):
    g, plan = plan1d(32)
    x = g.coords(0)
    a = P("(2 + cos(y1))*(1 + xi1^2)")
    u, v = np.exp(np.sin(x)) + 0j, np.cos(3 * x) + 0j
    lhs = calc.apply_symbol(a, s * u + t * v, plan, eps, 1.0)
    rhs = s * calc.apply_symbol(a, u, plan, eps, 1.0) + t * calc.apply_symbol(a, v, plan, eps, 1.0)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_spectral_dz():
    g = calc.grid(["y1", "y2"], (4, 32))
    z = g.mesh()[1]
    u = np.sin(3 * z) + 0j
    assert np.allclose(calc.spectral_dz(u, g, "y2", 0.1), 0.1 * 3 * np.cos(3 * z), atol=1e-12)
