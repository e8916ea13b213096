"""Transfer matrix Q, one-way generators B+-, approximate inverse P, and data coupling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import symbol_ir as ir
from .calculus import (
    GridFunction,
    QuantizationPlan,
    apply_symbol,
    compose_expr,
    parametrix,
    spectral_dz,
)
from .factorization import FactorizationResult
from .microlocal import microlocal_cutoff_g
from .scale_nets import ClassDescriptor, ScaleLadder, SymbolNet, classify_growth, GrowthFit
from .symbol_ir import Expr


class DiagonalizationError(ValueError):
    pass


@dataclass
class SymbolMatrix2x2:
    """Entries [[e11, e12], [e21, e22]] as expressions valid on the cone, plus declared orders.

    ``cut`` is the cone cutoff used when entries are realized as operators: every
    non-constant entry is zero-extended by it.
    """

    entries: Tuple[Tuple[Expr, Expr], Tuple[Expr, Expr]]
    orders: Tuple[Tuple[float, float], Tuple[float, float]]
    cut: Expr = ir.ONE
    name: str = ""

    def __getitem__(self, ij) -> Expr:
        i, j = ij
        return self.entries[i][j]

    def operator_entry(self, i: int, j: int) -> Expr:
        e = self.entries[i][j]
        if e.kind == ir.CONST or self.cut is ir.ONE:
            return e
        return ir.guard(self.cut, e)

    def check_orders(self, dims: int = 2, tol: float = 1e-9) -> bool:
        """Principal (eps^0) parts have homogeneous degree at most the declared order."""
        for i in range(2):
            for j in range(2):
                e0 = ir.simplify(ir.substitute(self.entries[i][j], {"eps": ir.ZERO}))
                if e0 is ir.ZERO:
                    continue
                d = ir.homogeneous_degree(e0)
                if d is None or float(d) > self.orders[i][j] + tol:
                    return False
        return True

    def to_dict(self):
        return {
            "name": self.name,
            "entries": [[ir.to_text(e) for e in row] for row in self.entries],
            "orders": [list(r) for r in self.orders],
        }


def matmul(A: SymbolMatrix2x2, B: SymbolMatrix2x2, N: int, dims: int = 2, name: str = "") -> SymbolMatrix2x2:
    """Entrywise #_N products."""
    ent = tuple(
        tuple(ir.add(*[compose_expr(A[i, k], B[k, j], N, dims) for k in range(2)]) for j in range(2))
        for i in range(2)
    )
    orders = tuple(
        tuple(max(A.orders[i][k] + B.orders[k][j] for k in range(2)) for j in range(2)) for i in range(2)
    )
    return SymbolMatrix2x2(ent, orders, A.cut, name)


def identity_residual(M: SymbolMatrix2x2) -> SymbolMatrix2x2:
    ent = ((ir.sub(M[0, 0], 1), M[0, 1]), (M[1, 0], ir.sub(M[1, 1], 1)))
    return SymbolMatrix2x2(ent, M.orders, M.cut, M.name + " - Id")


# ---------------------------------------------------------------------------


@dataclass
class OneWayFactors:
    """The two factorizations L = (eps d_z + A11)(eps d_z + A12) = (eps d_z + A21)(eps d_z + A22).

    A11 is the left factor with principal symbol -i sqrt(a), A21 the left factor with +i sqrt(a).
    With constant coefficients A21 = A12, but in general the two are different operators.
    """

    first: FactorizationResult
    second: FactorizationResult

    def __post_init__(self):
        if self.first.sign != -1 or self.second.sign != 1:
            raise DiagonalizationError("first factorization needs sign -1, second sign +1")

    @classmethod
    def build(cls, op, N: int, **kw) -> "OneWayFactors":
        from .factorization import factorize
        return cls(factorize(op, N, sign=-1, **kw), factorize(op, N, sign=1, **kw))

    @property
    def op(self):
        return self.first.op

    @property
    def N(self) -> int:
        return min(self.first.N, self.second.N)

    @property
    def cut(self) -> Expr:
        return self.first.cut

    def terms(self, j: int) -> List[Expr]:
        return (self.first if j == 1 else self.second).terms1

    def raw(self, j: int, N: Optional[int] = None) -> Expr:
        """A11 (j = 1) or A21 (j = 2) on the cone."""
        return (self.first if j == 1 else self.second).raw(1, N)


@dataclass
class OneWaySystem:
    result: "OneWayFactors"
    N: int
    m: float
    Q: SymbolMatrix2x2
    P: SymbolMatrix2x2
    B_plus: Expr
    B_minus: Expr
    C: Expr
    q: Tuple[Expr, Expr]
    qt: Tuple[Expr, Expr]

    @property
    def cut(self) -> Expr:
        return self.result.cut

    def B(self, sign: int, operator: bool = True) -> Expr:
        e = self.B_plus if sign > 0 else self.B_minus
        return ir.guard(self.cut, e) if operator else e

    def to_json(self) -> str:
        return json.dumps({
            "N": self.N,
            "m": self.m,
            "B_plus": ir.to_text(self.B_plus),
            "B_minus": ir.to_text(self.B_minus),
            "Q": self.Q.to_dict(),
            "P": self.P.to_dict(),
        }, indent=2)


def build_Q(result: OneWayFactors, m: float = 0.0, N: Optional[int] = None,
            q_plus: Expr = ir.ONE, q_minus: Expr = ir.ONE) -> SymbolMatrix2x2:
    """Q = diag(q+, q-) [[-A11, 1], [-A21, 1]] with #_N products."""
    N = result.N if N is None else N
    d = result.op.dims
    A11, A21 = result.raw(1, N), result.raw(2, N)
    ent = ((ir.neg(compose_expr(q_plus, A11, N, d)), q_plus), (ir.neg(compose_expr(q_minus, A21, N, d)), q_minus))
    return SymbolMatrix2x2(ent, ((1 - m, -m), (1 - m, -m)), result.cut, "Q")


def det_principal(result: OneWayFactors, q_plus: Expr = ir.ONE, q_minus: Expr = ir.ONE) -> Expr:
    return ir.mul(q_plus, q_minus, ir.sub(result.terms(2)[0], result.terms(1)[0]))


def _inverse(q: Expr, m: float, N: int, dims: int, side: str) -> Expr:
    if q.kind == ir.CONST:
        return ir.div(1, q)
    return parametrix([q], N, m, dims, side=side).expr()


def build_B_pm(result: OneWayFactors, N: Optional[int] = None, q_plus: Expr = ir.ONE, q_minus: Expr = ir.ONE,
               qt_plus: Optional[Expr] = None, qt_minus: Optional[Expr] = None, m: float = 0.0) -> Tuple[Expr, Expr]:
    """-i B+ = q+ # A11 # qt+ - (eps d_z q+) # qt+, and the minus twin with A21."""
    N = result.N if N is None else N
    d = result.op.dims
    z = f"y{d}"
    qt_plus = _inverse(q_plus, -m, N, d, "right") if qt_plus is None else qt_plus
    qt_minus = _inverse(q_minus, -m, N, d, "right") if qt_minus is None else qt_minus
    out = []
    for q, qt, A in ((q_plus, qt_plus, result.raw(1, N)), (q_minus, qt_minus, result.raw(2, N))):
        main = compose_expr(compose_expr(q, A, N, d), qt, N, d)
        dzq = ir.mul(ir.var("eps"), ir.differentiate(q, z))
        minus_iB = ir.sub(main, compose_expr(dzq, qt, N, d))
        out.append(ir.mul(1j, minus_iB))
    return out[0], out[1]


def build_P(result: OneWayFactors, N: Optional[int] = None, qt_plus: Expr = ir.ONE, qt_minus: Expr = ir.ONE,
            side: str = "right") -> Tuple[SymbolMatrix2x2, Expr]:
    """P = [[-C, C], [-A21 C, 1 + A21 C]] diag(qt+, qt-) with C a parametrix of A11 - A21.

    A right parametrix makes QP = Id mod eps^N (what the ansatz Q (d_z - M) P needs);
    a left one makes PQ = Id mod eps^N.
    """
    N = result.N if N is None else N
    d = result.op.dims
    p_terms = [ir.sub(t1, t2) for t1, t2 in zip(result.terms(1)[:N], result.terms(2)[:N])]
    C = parametrix(p_terms, N, 1.0, d, side=side).expr()
    A21 = result.raw(2, N)
    A21C = compose_expr(A21, C, N, d)
    base = ((ir.neg(C), C), (ir.neg(A21C), ir.add(1, A21C)))
    ent = tuple(
        (compose_expr(row[0], qt_plus, N, d), compose_expr(row[1], qt_minus, N, d)) for row in base
    )
    return SymbolMatrix2x2(ent, ((-1.0, -1.0), (0.0, 0.0)), result.cut, "P"), C


def build_system(result: OneWayFactors, N: Optional[int] = None, m: float = 0.0, side: str = "right") -> OneWaySystem:
    N = result.N if N is None else N
    Q = build_Q(result, m, N)
    Bp, Bm = build_B_pm(result, N, m=m)
    P, C = build_P(result, N, side=side)
    return OneWaySystem(result, N, m, Q, P, Bp, Bm, C, (ir.ONE, ir.ONE), (ir.ONE, ir.ONE))


# ---------------------------------------------------------------------------
# operator level


def apply_matrix(M: SymbolMatrix2x2, x0: np.ndarray, x1: np.ndarray, plan: QuantizationPlan, eps: float, omega: float):
    out = []
    for i in range(2):
        acc = 0
        for j, x in enumerate((x0, x1)):
            e = M.operator_entry(i, j)
            if e is ir.ZERO:
                continue
            acc = acc + apply_symbol(e, x, plan, eps, omega)
        out.append(np.zeros_like(x0) if np.isscalar(acc) else acc)
    return out[0], out[1]


def couple(U: GridFunction, dzU: GridFunction, Q: SymbolMatrix2x2, eps_index: int, plan: QuantizationPlan,
           ladder: Optional[ScaleLadder] = None) -> Tuple[GridFunction, GridFunction]:
    """(u+, u-) = Q (U, eps d_z U) at one ladder point."""
    e = U.eps[eps_index]
    w = ladder.omega_at(e) if ladder is not None else math.log(math.e / e)
    up, um = apply_matrix(Q, U.data[eps_index], dzU.data[eps_index], plan, e, w)
    return GridFunction(U.grid, (e,), up[None]), GridFunction(U.grid, (e,), um[None])


def cone_filter(c_min: float, theta: float, dims: int = 2, c1: float = 4.0, K0: float = 0.05, K1: float = 0.1) -> Expr:
    """x-free filter g * k with k = 1 inside {xi^2 <= (1/2) sin^2(theta) c_min tau^2} and 0 outside the theta-cone."""
    s2 = math.sin(theta) ** 2
    tau, xi = ir.var("tau"), ir.var("xi1")
    ratio = ir.div(ir.power(xi, 2), ir.mul(c_min, ir.power(tau, 2)))
    k = ir.sub(1, ir.ramp(ratio, 0.5 * s2, s2))
    return ir.mul(microlocal_cutoff_g(c1, K0, K1, dims), k)


@dataclass
class DiagResidual:
    eps: Tuple[float, ...]
    entries: Dict[str, np.ndarray]
    fits: Dict[str, GrowthFit]
    out_of_region: bool = False

    def off_diagonal(self) -> np.ndarray:
        return np.maximum(self.entries["E12"], self.entries["E21"])

    def to_dict(self):
        return {
            "eps": list(self.eps),
            "entries": {k: [float(x) for x in v] for k, v in self.entries.items()},
            "fits": {k: f.to_dict() for k, f in self.fits.items()},
            "out_of_region": self.out_of_region,
        }


def diag_residual(system: OneWaySystem, data: GridFunction, ladder: ScaleLadder, plan: QuantizationPlan,
                  zaxis: str = "y2", zero_floor: float = 0.0, region_check=None) -> DiagResidual:
    """Entry norms of Q (eps d_z - [[0, 1], [-A, 0]]) P - diag(eps d_z - i B+, eps d_z - i B-).

    Column j is probed with ``data`` placed in slot j; E_ij = ||row i|| / ||data||.
    """
    a = system.result.op.a()
    Bp, Bm = system.B(1), system.B(-1)
    g = data.grid
    vals = {k: [] for k in ("E11", "E12", "E21", "E22")}
    flag = False
    if region_check is not None:
        flag = not region_check(data)
    for idx, (e, w) in enumerate(ladder):
        u = data.data[idx]
        nu = np.linalg.norm(u)
        for j in range(2):
            x0 = u if j == 0 else np.zeros_like(u)
            x1 = u if j == 1 else np.zeros_like(u)
            X, Y = apply_matrix(system.P, x0, x1, plan, e, w)
            r0 = spectral_dz(X, g, zaxis, e) - Y
            r1 = spectral_dz(Y, g, zaxis, e) + apply_symbol(a, X, plan, e, w)
            o0, o1 = apply_matrix(system.Q, r0, r1, plan, e, w)
            d0 = spectral_dz(x0, g, zaxis, e) - 1j * apply_symbol(Bp, x0, plan, e, w)
            d1 = spectral_dz(x1, g, zaxis, e) - 1j * apply_symbol(Bm, x1, plan, e, w)
            vals[f"E1{j + 1}"].append(np.linalg.norm(o0 - d0) / nu)
            vals[f"E2{j + 1}"].append(np.linalg.norm(o1 - d1) / nu)
    arr = {k: np.asarray(v) for k, v in vals.items()}
    fits = {k: classify_growth(v, ladder, zero_floor=zero_floor) for k, v in arr.items()}
    return DiagResidual(ladder.eps, arr, fits, flag)
