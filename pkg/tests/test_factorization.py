import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psifactor import scale_nets as sn
from psifactor import symbol_ir as ir
from psifactor.factorization import (
    HyperbolicOperator,
    assemble_one_way,
    check_coefficient_floor,
    compute_floors,
    default_operator,
    factorization_residual,
    factorize,
    near_origin_cut,
    principal_root,
    smooth_indicator_h,
)

D = math.pi / 180
G1, G2 = 30 * D, 50 * D
LADDER = sn.make_ladder([2.0 ** -j for j in range(3, 9)])


def cone_points(count=800, seed=0, zeta=False):
    rng = np.random.default_rng(seed)
    r = rng.uniform(1.0, 8.0, count)
    ang = rng.uniform(-1, 1, count) * 0.9 * math.asin(math.sqrt(1.5) * math.sin(20 * D))
    pts = {"tau": r * np.cos(ang), "xi1": r * np.sin(ang), "y1": rng.uniform(0, 2 * math.pi, count),
           "y2": rng.uniform(0, 2 * math.pi, count)}
    if zeta:
        pts["zeta"] = rng.uniform(-4, 4, count)
    return pts


def test_h_values():
    op = HyperbolicOperator(2, ir.const(1.0))
    h = smooth_indicator_h(op, G1, G2).expr
    f = lambda v: ir.evaluate(h, {"tau": 1.0, "xi1": math.sqrt(v)})
    assert f(0.0) == 1
    assert f(math.sin(G2) ** 2 + 0.1) == 0
    assert f((math.sin(G1) ** 2 + math.sin(G2) ** 2) / 2) == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(-10, 10))
def test_h_bounds(tau, xi):
    h = smooth_indicator_h(default_operator(), G1, G2).expr
    v = np.real(ir.evaluate(h, {"tau": tau, "xi1": xi, "y1": 0.3, "y2": 1.1}, 0.1, 3.0))
    assert -1e-15 <= v <= 1 + 1e-15


def test_root_identity():
    op = HyperbolicOperator(2, ir.const(4.0))
    h = smooth_indicator_h(op, G1, G2)
    root = principal_root(op, -1, h).expr
    pts = cone_points()
    on = np.real(ir.evaluate(h.expr, pts)) == 1
    sq = ir.evaluate(root, pts) ** 2 + ir.evaluate(op.a(), pts)
    assert on.sum() > 100
    assert np.max(np.abs(sq[on])) <= 1e-12 * np.max(np.abs(ir.evaluate(op.a(), pts)))
    at0 = ir.evaluate(root, {"tau": -1.5, "xi1": 0.0})
    assert at0 == pytest.approx(-1j * 2 * 1.5)
    assert ir.evaluate(principal_root(op, 1, h).expr, {"tau": 1.5, "xi1": 0.0}) == pytest.approx(3j)


def test_mollified_operator_degree_and_floor():
    op = default_operator()
    assert ir.homogeneous_degree(op.a()) == 2
    assert ir.homogeneous_degree(principal_root(op).expr.children[1]) == 1
    assert check_coefficient_floor(op, LADDER) == pytest.approx(1.5, abs=1e-2)
    fl = compute_floors(op, LADDER, count=500)
    assert fl.min_a > 0


def test_constant_coefficients_have_no_corrections():
    op = HyperbolicOperator(2, ir.const(2.0))
    fr = factorize(op, 3)
    pts = cone_points(zeta=True)
    for t in fr.terms1[1:] + fr.terms2[1:]:
        assert np.max(np.abs(ir.evaluate(t, pts, 0.1, 3.3))) == 0
    h = np.real(ir.evaluate(fr.h.expr, pts)) * np.real(ir.evaluate(fr.cut, pts))
    res = ir.evaluate(factorization_residual(fr, 3), pts, 0.1, 3.3)
    assert np.max(np.abs(res[h == 1])) <= 1e-12 * np.max(np.abs(ir.evaluate(op.l(), pts)))


def test_branch_one_constant_case():
    op = HyperbolicOperator(2, ir.const(2.0))
    fr = factorize(op, 1, cut_K=0.25)
    a1 = assemble_one_way(fr, 1, 1).expr
    expect = ir.mul(-1j, ir.sqrt(op.a()), fr.h.expr, near_origin_cut(op, 0.25))
    pts = cone_points()
    assert np.allclose(ir.evaluate(a1, pts), ir.evaluate(expect, pts), atol=1e-13)


def test_branch_two_principal_is_negated():
    fr = factorize(default_operator(), 2)
    pts = cone_points()
    assert np.allclose(ir.evaluate(fr.terms2[0], pts, 0.1, 3.0), -ir.evaluate(fr.terms1[0], pts, 0.1, 3.0))


def test_sign_choice_cancels_first_order_terms():
    fr = factorize(default_operator(), 3)
    pts = cone_points()
    for j in range(3):
        s = ir.evaluate(ir.add(fr.terms1[j], fr.terms2[j]), pts, 0.1, 3.3)
        assert np.max(np.abs(s)) == 0


def test_two_fact_sum_is_negligible():
    fr = factorize(default_operator(), 2)
    s = ir.add(assemble_one_way(fr, 1, 2).expr, assemble_one_way(fr, 2, 2).expr)
    pts = cone_points(300)
    vals = [np.max(np.abs(ir.evaluate(s, pts, e, w))) for e, w in LADDER]
    fit = sn.classify_growth(vals, LADDER, zero_floor=1e-13)
    assert fit.exact_zero or fit.passes(6)


def test_residual_orders_variable():
    op = default_operator()
    pts = cone_points(600, zeta=True)
    scale = np.max(np.abs(ir.evaluate(op.l(), pts, 0.1, 3.0)))
    for N in (1, 2, 3):
        fr = factorize(op, N)
        r = factorization_residual(fr, N, N + 2)
        vals = [np.max(np.abs(ir.evaluate(r, pts, e, w))) / scale for e, w in LADDER]
        assert sn.classify_growth(vals, LADDER, zero_floor=1e-13).passes(N, 0.5)


def test_result_json_roundtrip():
    op = default_operator()
    fr = factorize(op, 2)
    d = json.loads(fr.to_json())
    assert d["N"] == 2 and d["sign"] == -1 and len(d["branch1"]) == 2
    back = ir.parse_symbol(d["branch1"][0], dims=2, coefficients=ir.coefficients_in(op.c))
    pts = cone_points(50)
    assert np.allclose(ir.evaluate(back, pts, 0.1, 3.0), ir.evaluate(fr.terms1[0], pts, 0.1, 3.0))
