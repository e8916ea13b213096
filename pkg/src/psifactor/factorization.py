"""One-way factorization of l = -zeta^2 - <b xi, xi> + c tau^2 into (eps d_z + A1)(eps d_z + A2) + R."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import symbol_ir as ir
from .calculus import Series, compose_expr, compose_series, default_pairs, series_add, series_expr, series_scale
from .microlocal import DEG, ConicRegion
from .scale_nets import ClassDescriptor, SampleSpec, ScaleLadder, SymbolNet
from .symbol_ir import Expr, SampledCoefficient


class FactorizationError(ValueError):
    pass


def default_c(mollified: bool = True, n: int = 32, amp: float = 0.5) -> Expr:
    """c(y1, y2) = 2 + amp*sin(y1 + y2), either as a mollified sampled coefficient or a formula."""
    if not mollified:
        return ir.parse_symbol(f"2 + {amp}*sin(y1 + y2)", dims=2)
    sc = SampledCoefficient.from_function("c", ("y1", "y2"), lambda y1, y2: 2 + amp * np.sin(y1 + y2), n, mollify=True)
    return ir.coef(sc)


@dataclass
class HyperbolicOperator:
    """Second-order operator with symbol l = -zeta^2 - sum b_j xi_j^2 + c tau^2 (b diagonal).

    ``c``, ``b`` may depend on eps/omega (regularized families); ``c_lim``, ``b_lim`` are the
    eps -> 0 limits used to define the frequency cones.
    """

    dims: int = 2
    c: Expr = field(default_factory=lambda: ir.const(1.0))
    b: Tuple[Expr, ...] = ()
    c_lim: Optional[Expr] = None
    b_lim: Optional[Tuple[Expr, ...]] = None

    def __post_init__(self):
        self.c = ir.as_expr(self.c)
        self.b = tuple(ir.as_expr(x) for x in self.b) or tuple(ir.ONE for _ in range(self.dims - 1))
        if len(self.b) != self.dims - 1:
            raise FactorizationError(f"need {self.dims - 1} b coefficients")
        self.c_lim = ir.as_expr(self.c_lim) if self.c_lim is not None else self.c
        self.b_lim = tuple(ir.as_expr(x) for x in self.b_lim) if self.b_lim is not None else self.b
        for e in (self.c,) + self.b:
            bad = {v for v in e.free if ir.is_frequency(v)}
            if bad:
                raise FactorizationError(f"coefficients must not depend on frequencies: {sorted(bad)}")

    @property
    def xis(self) -> List[str]:
        return [f"xi{k}" for k in range(1, self.dims)]

    @property
    def freq_vars(self) -> Tuple[str, ...]:
        return ("tau",) + tuple(self.xis)

    @property
    def pos_vars(self) -> Tuple[str, ...]:
        return tuple(f"y{k}" for k in range(1, self.dims + 1))

    def a(self) -> Expr:
        """a = c tau^2 - <b xi, xi>."""
        tau = ir.var("tau")
        return ir.sub(ir.mul(self.c, ir.power(tau, 2)), ir.add(*[ir.mul(bj, ir.power(ir.var(x), 2)) for bj, x in zip(self.b, self.xis)]))

    def l(self) -> Expr:
        return ir.sub(self.a(), ir.power(ir.var("zeta"), 2))

    def f(self) -> Expr:
        """f = <b xi, xi> / (c tau^2)."""
        num = ir.add(*[ir.mul(bj, ir.power(ir.var(x), 2)) for bj, x in zip(self.b, self.xis)])
        return ir.div(num, ir.mul(self.c, ir.power(ir.var("tau"), 2)))

    def region(self, **kw) -> ConicRegion:
        if self.dims != 2:
            b = ir.ONE
        else:
            b = self.b_lim[0]
        return ConicRegion(c=self.c_lim, b=b, **kw)

    @property
    def constant(self) -> bool:
        pos = set(self.pos_vars)
        return not any(e.free & pos for e in (self.c,) + self.b)


def default_operator(mollified: bool = True, n: int = 32, amp: float = 0.5) -> HyperbolicOperator:
    return HyperbolicOperator(2, default_c(mollified, n, amp))


def check_coefficient_floor(op: HyperbolicOperator, ladder: ScaleLadder, n: int = 64, floor: float = 1e-6) -> float:
    """min |c_eps| over a y-grid and the ladder; raises if c comes near zero."""
    ys = np.meshgrid(*[np.arange(n) * 2 * np.pi / n for _ in op.pos_vars], indexing="ij")
    pts = {v: m.ravel() for v, m in zip(op.pos_vars, ys)}
    lo = math.inf
    for e, w in ladder:
        v = np.abs(np.broadcast_to(ir.evaluate(op.c, pts, e, w), ys[0].size))
        lo = min(lo, float(v.min()))
    if not lo > floor:
        raise FactorizationError(f"c is not strictly nonzero: min |c| = {lo:.3g}")
    return lo


# ---------------------------------------------------------------------------
# cutoffs and roots


def smooth_indicator_h(op: HyperbolicOperator, gamma1: float = 30 * DEG, gamma2: float = 50 * DEG) -> SymbolNet:
    """h = 1 - ramp(f; sin^2 gamma1, sin^2 gamma2): 1 on {f <= sin^2 gamma1}, 0 on {f >= sin^2 gamma2}."""
    if not 0 < gamma1 < gamma2 < math.pi / 2:
        raise FactorizationError("need 0 < gamma1 < gamma2 < pi/2")
    h = ir.sub(1, ir.ramp(op.f(), math.sin(gamma1) ** 2, math.sin(gamma2) ** 2))
    return SymbolNet(h, ClassDescriptor(0.0), None, op.dims)


def near_origin_cut(op: HyperbolicOperator, K: float = 0.25) -> Expr:
    """(1 - phi): 0 for |(tau, xi)| <= K, 1 for |(tau, xi)| >= 2K."""
    r = ir.sqrt(ir.add(*[ir.power(ir.var(v), 2) for v in op.freq_vars]))
    return ir.ramp(r, K, 2 * K)


def principal_root(op: HyperbolicOperator, sign: int = -1, h: Optional[SymbolNet] = None) -> SymbolNet:
    """sign * i sqrt(a); with h given, the zero-extended h * (sign * i sqrt(a))."""
    if sign not in (1, -1):
        raise FactorizationError("sign must be +1 or -1")
    root = ir.mul(sign * 1j, ir.sqrt(op.a()))
    e = root if h is None else ir.guard(h.expr, root)
    return SymbolNet(e, ClassDescriptor(1.0), None, op.dims)


@dataclass
class Floors:
    eps1: float
    eps2: float
    eps3: float
    min_a: float

    @property
    def eps0(self) -> float:
        return min(self.eps1, self.eps2, self.eps3)

    def to_dict(self):
        return {"eps0": self.eps0, "eps1": self.eps1, "eps2": self.eps2, "eps3": self.eps3, "min_a_over_r2": self.min_a}


def _ladder_floor(ok: Sequence[bool], eps: Sequence[float]) -> float:
    """Largest ladder eps such that the check holds at it and every smaller ladder eps."""
    order = np.argsort(eps)
    best = 0.0
    for i in order:
        if not ok[i]:
            break
        best = eps[i]
    if all(ok):
        return math.inf
    return best


def compute_floors(op: HyperbolicOperator, ladder: ScaleLadder, gamma1: float = 30 * DEG, gamma2: float = 50 * DEG,
                   theta1: float = 20 * DEG, theta2: float = 60 * DEG, count: int = 10_000, seed: int = 0) -> Floors:
    """eps1: a_eps > 0 on I'_theta2; eps2: I'_theta1 inside {f_eps <= sin^2 gamma1}; eps3: {f_eps <= sin^2 gamma2} inside I'_theta2."""
    R = op.region(theta1=theta1, gamma1=gamma1, gamma2=gamma2, theta2=theta2)
    spec = SampleSpec(K=1.0, R_max=8.0, count=count, freq_vars=op.freq_vars, pos_vars=op.pos_vars, seed=seed)
    pts = spec.points()
    in1 = R.contains(pts, theta1)
    in2 = R.contains(pts, theta2)
    r2 = sum(pts[v] ** 2 for v in op.freq_vars)
    fexpr, aexpr = op.f(), op.a()
    ok1, ok2, ok3 = [], [], []
    lo = math.inf
    for e, w in ladder:
        fv = np.real(np.broadcast_to(ir.evaluate(fexpr, pts, e, w), r2.shape))
        av = np.real(np.broadcast_to(ir.evaluate(aexpr, pts, e, w), r2.shape))
        if in2.any():
            lo = min(lo, float((av[in2] / r2[in2]).min()))
        ok1.append(bool(np.all(av[in2] > 0)))
        ok2.append(bool(np.all(fv[in1] <= math.sin(gamma1) ** 2)))
        ok3.append(bool(np.all(in2[fv <= math.sin(gamma2) ** 2])))
    eps = list(ladder.eps)
    return Floors(_ladder_floor(ok1, eps), _ladder_floor(ok2, eps), _ladder_floor(ok3, eps), lo)


# ---------------------------------------------------------------------------
# the recursive factorization


@dataclass
class FactorizationResult:
    op: HyperbolicOperator
    N: int
    sign: int
    terms1: List[Expr]
    terms2: List[Expr]
    gamma0: List[Expr]
    gamma1: List[Expr]
    h: SymbolNet
    cut: Expr
    floors: Optional[Floors] = None

    @property
    def eps0(self) -> Optional[float]:
        if self.floors is None or math.isinf(self.floors.eps0):
            return None
        return self.floors.eps0

    def raw(self, branch: int, N: Optional[int] = None) -> Expr:
        """sum_{mu<N} eps^mu bbar^(mu)_branch, valid on {h = 1} (no cutoffs)."""
        N = self.N if N is None else N
        ts = (self.terms1 if branch == 1 else self.terms2)[:N]
        return series_expr({k: t for k, t in enumerate(ts)})

    def descriptor(self, mu: int) -> ClassDescriptor:
        return ClassDescriptor(order=1.0 - mu, growth=float(mu), nu=1.0, l=float(mu))

    def to_json(self) -> str:
        return json.dumps({
            "N": self.N,
            "sign": self.sign,
            "branch1": [ir.to_text(t) for t in self.terms1],
            "branch2": [ir.to_text(t) for t in self.terms2],
            "h": ir.to_text(self.h.expr),
            "floors": self.floors.to_dict() if self.floors else None,
        }, indent=2)


def factorize(op: HyperbolicOperator, N: int, gamma1: float = 30 * DEG, gamma2: float = 50 * DEG, sign: int = -1,
              cut_K: float = 0.25, ladder: Optional[ScaleLadder] = None, simplify: bool = True) -> FactorizationResult:
    """Stage k solves {-g1 = b1 + b2, -g0 = b1 a2 + a1 b2} for the eps^k terms.

    g0 = eps d_z a2 + a1 # a2 - a and g1 = a1 + a2 are taken at eps-degree k with a1, a2
    truncated after k terms. ``sign`` is the sign of the branch-1 principal root i sqrt(a).
    """
    if N < 1:
        raise FactorizationError("N must be >= 1")
    pairs = default_pairs(op.dims)
    zname = f"y{op.dims}"
    a = op.a()
    root = ir.sqrt(a)
    a1 = ir.mul(sign * 1j, root)
    a2 = ir.neg(a1)
    det = ir.sub(a2, a1)
    T1: List[Expr] = [a1]
    T2: List[Expr] = [a2]
    G0: List[Expr] = []
    G1: List[Expr] = []
    for k in range(1, N + 1):
        A1 = {i: t for i, t in enumerate(T1)}
        A2 = {i: t for i, t in enumerate(T2)}
        dz = {i + 1: ir.differentiate(t, zname) for i, t in enumerate(T2)}
        g0 = series_add(dz, compose_series(A1, A2, k, pairs), {0: ir.neg(a)})
        g1 = series_add(A1, A2)
        tg0 = g0.get(k, ir.ZERO)
        tg1 = g1.get(k, ir.ZERO)
        if simplify:
            tg0 = ir.simplify(tg0)
        G0.append(tg0)
        G1.append(tg1)
        if k == N:
            break
        b1 = ir.div(ir.sub(ir.mul(a1, tg1), tg0), det)
        b2 = ir.sub(ir.neg(tg1), b1)
        T1.append(b1)
        T2.append(b2)
    h = smooth_indicator_h(op, gamma1, gamma2)
    cut = ir.mul(h.expr, near_origin_cut(op, cut_K))
    floors = compute_floors(op, ladder, gamma1, gamma2) if ladder is not None else None
    return FactorizationResult(op, N, sign, T1, T2, G0, G1, h, cut, floors)


def assemble_one_way(result: FactorizationResult, branch: int, N: Optional[int] = None) -> SymbolNet:
    """a_j = h (1 - phi) sum_{mu<N} eps^mu bbar^(mu)_j, zero for eps > eps0."""
    if branch not in (1, 2):
        raise FactorizationError("branch must be 1 or 2")
    N = result.N if N is None else N
    if N > result.N:
        raise FactorizationError(f"only {result.N} terms available")
    e = ir.guard(result.cut, result.raw(branch, N))
    return SymbolNet(e, ClassDescriptor(1.0, 0.0, 1.0, 0.0), None, result.op.dims, result.eps0)


def one_way_symbol(result: FactorizationResult, branch: int, N: Optional[int] = None) -> Expr:
    """i zeta + a_j on {h = 1}, the symbol of eps d_z + A_j."""
    return ir.add(ir.mul(1j, ir.var("zeta")), result.raw(branch, N))


def factorization_residual(result: FactorizationResult, N: Optional[int] = None, compose_order: Optional[int] = None) -> Expr:
    """l - l1 #_M l2 on {h = 1}, with l_j = i zeta + a_j truncated after N terms."""
    N = result.N if N is None else N
    M = N if compose_order is None else compose_order
    l1 = one_way_symbol(result, 1, N)
    l2 = one_way_symbol(result, 2, N)
    return ir.sub(result.op.l(), compose_expr(l1, l2, M, result.op.dims))
