import math

import numpy as np
import pytest

from psifactor import scale_nets as sn
from psifactor import symbol_ir as ir
from psifactor.calculus import GridFunction, QuantizationPlan, grid
from psifactor.diagonalization import (
    OneWayFactors,
    SymbolMatrix2x2,
    build_Q,
    build_system,
    couple,
    det_principal,
    diag_residual,
    identity_residual,
    matmul,
)
from psifactor.experiments import diagonalize_run
from psifactor.factorization import HyperbolicOperator, default_operator
from psifactor.harness import ExperimentConfig

D = math.pi / 180
LADDER = sn.make_ladder([2.0 ** -j for j in range(3, 9)])


def cone_points(count=600, seed=1):
    rng = np.random.default_rng(seed)
    r = rng.uniform(1.0, 8.0, count)
    ang = rng.uniform(-1, 1, count) * 20 * D
    return {"tau": r * np.cos(ang), "xi1": r * np.sin(ang), "y1": rng.uniform(0, 2 * math.pi, count),
            "y2": rng.uniform(0, 2 * math.pi, count)}


def constant_factors(N=2, c=2.0):
    return OneWayFactors.build(HyperbolicOperator(2, ir.const(c)), N)


def ev(e, pts, eps=0.1):
    return np.broadcast_to(ir.evaluate(e, pts, eps, math.log(math.e / eps)), pts["tau"].shape)


def test_Q_structure():
    f = constant_factors()
    Q = build_Q(f, 0.0, 2)
    pts = cone_points()
    assert np.allclose(ev(Q.entries[0][0], pts), -ev(f.raw(1, 2), pts))
    assert np.allclose(ev(Q.entries[1][0], pts), -ev(f.raw(2, 2), pts))
    assert Q.entries[0][1] == ir.ONE and Q.entries[1][1] == ir.ONE
    assert build_Q(OneWayFactors.build(default_operator(), 1), 0.0, 1).orders == ((1.0, 0.0), (1.0, 0.0))


def test_det_principal_lower_bound():
    c = 2.0
    f = constant_factors(c=c)
    pts = cone_points()
    det = np.abs(ev(det_principal(f), pts))
    r = np.hypot(pts["tau"], pts["xi1"])
    a = c * pts["tau"] ** 2 - pts["xi1"] ** 2
    assert np.allclose(det, 2 * np.sqrt(a))
    # on the cone a >= C |(tau, xi)|^2 with C = (c cos^2 - sin^2) at the widest angle
    C = c * math.cos(20 * D) ** 2 - math.sin(20 * D) ** 2
    assert np.all(det >= 2 * math.sqrt(C) * r * (1 - 1e-12))


def test_B_constant_case_is_real():
    s = build_system(constant_factors(), 2)
    pts = cone_points()
    root = np.sqrt(2 * pts["tau"] ** 2 - pts["xi1"] ** 2)
    assert np.allclose(ev(s.B_plus, pts), root)
    assert np.allclose(ev(s.B_minus, pts), -root)


def test_B_plus_top_order_is_real_and_intertwines():
    pts = cone_points()
    # at N = 1 the generator is its top-order term alone
    top = ev(build_system(OneWayFactors.build(default_operator(), 1), 1).B_plus, pts)
    assert np.max(np.abs(top.imag)) <= 1e-10 * np.max(np.abs(top))
    f = OneWayFactors.build(default_operator(), 2)
    s = build_system(f, 2)
    # with unit transfer symbols (d_z + A11) - (d_z - i B+) vanishes identically
    for eps in (0.1, 0.01):
        diff = ev(f.raw(1, 2), pts, eps) + 1j * ev(s.B_plus, pts, eps)
        assert np.max(np.abs(diff)) <= 1e-12


def test_P_orders_and_exact_inverse():
    s = build_system(constant_factors(), 2)
    assert s.P.orders == ((-1.0, -1.0), (0.0, 0.0))
    pts = cone_points()
    for R in (identity_residual(matmul(s.Q, s.P, 2)), identity_residual(matmul(s.P, s.Q, 2))):
        for row in R.entries:
            for e in row:
                assert np.max(np.abs(ev(e, pts))) <= 1e-12


def test_P_variable_residual_decays():
    pts = cone_points(300)
    for N in (1, 2):
        s = build_system(OneWayFactors.build(default_operator(), N), N)
        R = identity_residual(matmul(s.Q, s.P, N))
        vals = [np.max(np.abs(ev(R.entries[0][0], pts, e))) for e in LADDER.eps]
        assert sn.classify_growth(vals, LADDER, zero_floor=1e-13).passes(N, 0.5)


def test_couple_identity_and_zero():
    g = grid(["y1"], 32)
    plan = QuantizationPlan(g, {"y1": "xi1"}, {"tau": 1.0, "y2": 0.0})
    x = g.coords(0)
    U = GridFunction(g, (0.1,), (np.exp(np.sin(x)) + 0j)[None])
    dU = GridFunction(g, (0.1,), (np.cos(x) + 0j)[None])
    Id = SymbolMatrix2x2(((ir.ONE, ir.ZERO), (ir.ZERO, ir.ONE)), ((0, 0), (0, 0)))
    up, um = couple(U, dU, Id, 0, plan)
    assert np.allclose(up.data, U.data) and np.allclose(um.data, dU.data)
    Q = build_Q(constant_factors(), 0.0, 2)
    zero = GridFunction(g, (0.1,), np.zeros((1, 32), complex))
    up, um = couple(zero, dU, Q, 0, plan)
    assert np.allclose(up.data, dU.data) and np.allclose(um.data, dU.data)


def test_constant_operator_diagonalizes_exactly():
    cfg = ExperimentConfig(op_eps_max=2.0 ** -2, op_eps_min=2.0 ** -5, diag_nx=32, diag_nz=64)
    res = diagonalize_run(cfg, HyperbolicOperator(2, ir.const(2.0)), N=2)
    assert max(float(np.max(v)) for v in res.entries.values()) <= 1e-10


def test_out_of_region_flag():
    f = constant_factors()
    s = build_system(f, 2)
    g = grid(["y1", "y2"], (8, 8))
    lad = sn.make_ladder([0.25, 0.125, 0.0625, 0.03125])
    data = GridFunction(g, lad.eps, np.ones((4, 8, 8), complex))
    plan = QuantizationPlan(g, {"y1": "xi1"}, {"tau": 0.5})
    assert diag_residual(s, data, lad, plan, region_check=lambda d: False).out_of_region
