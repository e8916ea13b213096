"""Scale ladders, log-mollified coefficients, sampled seminorms and growth fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, qmc

from . import symbol_ir as ir
from .symbol_ir import Expr, SampledCoefficient


class LadderError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleLadder:
    eps: Tuple[float, ...]
    C: float = math.e
    r: int = 1

    @property
    def omega(self) -> Tuple[float, ...]:
        return tuple(omega_of(e, self.C, self.r) for e in self.eps)

    def __len__(self):
        return len(self.eps)

    def __iter__(self):
        return iter(zip(self.eps, self.omega))

    def omega_at(self, eps: float) -> float:
        return omega_of(eps, self.C, self.r)

    def below(self, eps_max: float) -> "ScaleLadder":
        return ScaleLadder(tuple(e for e in self.eps if e <= eps_max), self.C, self.r)

    def to_dict(self):
        return {"eps": list(self.eps), "C": self.C, "r": self.r, "omega": list(self.omega)}


def omega_of(eps: float, C: float = math.e, r: int = 1) -> float:
    return math.log(C / eps) ** (1.0 / r)


def make_ladder(eps_list: Sequence[float], C: float = math.e, r: int = 1) -> ScaleLadder:
    eps = tuple(float(e) for e in eps_list)
    if C <= 0:
        raise LadderError("C must be positive")
    if int(r) != r or r < 1:
        raise LadderError("r must be a positive integer")
    if not eps:
        raise LadderError("empty ladder")
    if any(not (0 < e <= 1) for e in eps):
        raise LadderError("eps values must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise LadderError("eps values must be strictly decreasing")
    bad = [e for e in eps if C / e <= 1]
    if bad:
        raise LadderError(f"C/eps must exceed 1; fails at eps={bad[0]}")
    return ScaleLadder(eps, float(C), int(r))


def default_ladder(j_min: int = 3, j_max: int = 12, C: float = math.e, r: int = 1) -> ScaleLadder:
    return make_ladder([2.0 ** -j for j in range(j_min, j_max + 1)], C, r)


def geometric_ladder(eps_max: float, eps_min: float, count: int, C: float = math.e, r: int = 1) -> ScaleLadder:
    return make_ladder(np.geomspace(eps_max, eps_min, count), C, r)


@dataclass(frozen=True)
class ClassDescriptor:
    order: float = 0.0
    growth: float = 0.0
    nu: float = 0.0
    l: float = 0.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("log-type nu must be >= 0")

    def to_dict(self):
        return {"order": self.order, "growth": self.growth, "nu": self.nu, "l": self.l}


@dataclass(frozen=True)
class SymbolNet:
    """A symbol expression with a claimed class; zero for eps above ``eps_floor`` when set."""

    expr: Expr
    claimed: ClassDescriptor = ClassDescriptor()
    region: object = None
    dims: int = 2
    eps_floor: Optional[float] = None

    def __post_init__(self):
        ys, fs = ir.coordinates(self.dims)
        legal = set(ys) | set(fs) | set(ir.SCALES)
        bad = set(self.expr.free) - legal
        if bad:
            raise ir.SymbolError(f"illegal variables {sorted(bad)} for dims={self.dims}")

    def evaluate(self, point, eps: float, omega: float):
        if self.eps_floor is not None and eps > self.eps_floor:
            shape = np.broadcast_shapes(*[np.shape(v) for v in point.values()]) if point else ()
            return np.zeros(shape, dtype=complex)
        return np.asarray(ir.evaluate(self.expr, point, eps, omega), dtype=complex)

    def with_expr(self, expr: Expr, claimed: Optional[ClassDescriptor] = None) -> "SymbolNet":
        return SymbolNet(expr, claimed or self.claimed, self.region, self.dims, self.eps_floor)

    def text(self) -> str:
        return ir.to_text(self.expr)


def net(text_or_expr, dims: int = 2, coefficients=None, order=0.0, growth=0.0, nu=0.0, l=0.0, region=None):
    e = text_or_expr if isinstance(text_or_expr, Expr) else ir.parse_symbol(text_or_expr, dims, coefficients)
    return SymbolNet(e, ClassDescriptor(order, growth, nu, l), region, dims)


# ---------------------------------------------------------------------------
# coefficients


@dataclass
class CoefficientFamily:
    raw: SampledCoefficient
    ladder: ScaleLadder
    values: Dict[float, np.ndarray]
    coefficient: SampledCoefficient

    def at(self, eps: float) -> np.ndarray:
        return self.values[eps]


def regularize_coefficient(raw: SampledCoefficient, ladder: ScaleLadder) -> CoefficientFamily:
    """c_eps = raw * phi_{1/omega_eps}, computed with the plateau mollifier in frequency space."""
    moll = SampledCoefficient(raw.name, raw.axes, raw.samples, raw.periods, mollify=True)
    values = {}
    for e, w in ladder:
        for ax in range(raw.samples.ndim):
            if 2 * w > raw.nyquist(ax):
                raise LadderError(
                    f"grid of {raw.name} too coarse for eps={e}: 2*omega={2 * w:.4g} exceeds Nyquist {raw.nyquist(ax):.4g}"
                )
        values[e] = moll.grid_values(w)
    return CoefficientFamily(raw, ladder, values, moll)


def check_strictly_nonzero(family, ladder: Optional[ScaleLadder] = None, floor: float = 1e-6):
    """(min over ladder and grid of |c_eps| >= floor, that minimum)."""
    if isinstance(family, CoefficientFamily):
        arrays = list(family.values.values())
    elif isinstance(family, SampledCoefficient):
        if family.mollify:
            if ladder is None:
                raise LadderError("a ladder is needed for a mollified coefficient")
            arrays = [family.grid_values(w) for _, w in ladder]
        else:
            arrays = [family.samples]
    elif isinstance(family, Mapping):
        arrays = [np.asarray(v) for v in family.values()]
    else:
        arrays = [np.asarray(family, dtype=float)]
    bound = float(min(np.min(np.abs(a)) for a in arrays))
    if bound < 1e-12:
        bound = 0.0
    return bound >= floor, bound


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleSpec:
    """Sample set for suprema: radii in [K, R_max], directions on the frequency sphere.

    ``count`` quasi-random candidates (scrambled Halton, prefix-stable in count) plus a
    structured grid; candidates outside ``region`` (a callable mask) are discarded.
    ``fixed`` pins variables to constants (for example zeta = 0).
    """

    K: float = 1.0
    R_max: Optional[float] = None
    count: int = 10_000
    freq_vars: Tuple[str, ...] = ("tau", "xi1")
    pos_vars: Tuple[str, ...] = ("y1",)
    periods: Optional[Tuple[float, ...]] = None
    region: Optional[Callable[[Dict[str, np.ndarray]], np.ndarray]] = None
    structured: bool = True
    seed: int = 0
    fixed: Dict[str, float] = field(default_factory=dict)
    extra: Optional[Callable[[Dict[str, np.ndarray], np.random.Generator], Dict[str, np.ndarray]]] = None

    @property
    def r_max(self) -> float:
        return self.R_max if self.R_max is not None else 64.0 * self.K

    def points(self) -> Dict[str, np.ndarray]:
        pts = _sample_points(self)
        if not len(next(iter(pts.values()))):
            raise LadderError("empty sample set: region and radius range are incompatible")
        return pts


def _sample_points(spec: SampleSpec) -> Dict[str, np.ndarray]:
    nf, ny = len(spec.freq_vars), len(spec.pos_vars)
    periods = spec.periods or (2 * np.pi,) * ny
    blocks = []
    if spec.count > 0:
        eng = qmc.Halton(d=nf + ny + 1, scramble=True, seed=spec.seed)
        u = eng.random(spec.count)
        u = np.clip(u, 1e-12, 1 - 1e-12)
        g = norm.ppf(u[:, :nf])
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        rad = spec.K * (spec.r_max / spec.K) ** u[:, nf]
        ys = u[:, nf + 1:] * np.asarray(periods)
        blocks.append((dirs * rad[:, None], ys))
    if spec.structured:
        radii = spec.K * (spec.r_max / spec.K) ** np.linspace(0, 1, 7)
        if nf == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            ang = np.linspace(0, 2 * np.pi, 33)[:-1]
            d2 = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            dirs = np.concatenate([d2, np.zeros((len(d2), nf - 2))], axis=1)
        ygrid = np.stack(np.meshgrid(*[np.arange(4) * p / 4 for p in periods], indexing="ij"), -1).reshape(-1, ny) if ny else np.zeros((1, 0))
        F = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, nf)
        Fi = np.repeat(F, len(ygrid), axis=0)
        Yi = np.tile(ygrid, (len(F), 1))
        blocks.append((Fi, Yi))
    F = np.concatenate([b[0] for b in blocks])
    Y = np.concatenate([b[1] for b in blocks])
    pts = {v: F[:, i] for i, v in enumerate(spec.freq_vars)}
    pts.update({v: Y[:, i] for i, v in enumerate(spec.pos_vars)})
    for k, v in spec.fixed.items():
        pts[k] = np.full(len(F), float(v))
    keep = np.ones(len(F), dtype=bool)
    if "tau" in pts:
        keep &= pts["tau"] != 0
    if spec.region is not None:
        keep &= np.asarray(spec.region(pts), dtype=bool)
    pts = {k: v[keep] for k, v in pts.items()}
    if spec.extra is not None:
        pts.update(spec.extra(pts, np.random.default_rng(spec.seed)))
    return pts


def japanese(pts: Mapping[str, np.ndarray], freq_vars: Sequence[str]) -> np.ndarray:
    return np.sqrt(1.0 + sum(np.abs(pts[v]) ** 2 for v in freq_vars))


def derivative_expr(e: Expr, alpha: Mapping[str, int], beta: Mapping[str, int]) -> Expr:
    for v, k in list(alpha.items()) + list(beta.items()):
        e = ir.differentiate(e, v, k)
    return e


def seminorm_estimate(
    net_: SymbolNet,
    alpha: Mapping[str, int],
    beta: Mapping[str, int],
    ladder: ScaleLadder,
    samples: SampleSpec,
    order: Optional[float] = None,
    points: Optional[Dict[str, np.ndarray]] = None,
    cap: int = 6,
) -> np.ndarray:
    """Sampled sup |d^alpha_xi d^beta_y a_eps| <xi>^{-m+|alpha|} per ladder point (a lower bound)."""
    alpha, beta = dict(alpha), dict(beta)
    if sum(alpha.values()) + sum(beta.values()) > cap:
        raise LadderError(f"derivative order exceeds the cap {cap}")
    m = net_.claimed.order if order is None else order
    pts = samples.points() if points is None else points
    d = derivative_expr(net_.expr, alpha, beta)
    weight = japanese(pts, samples.freq_vars) ** (-m + sum(alpha.values()))
    out = []
    for e, w in ladder:
        if net_.eps_floor is not None and e > net_.eps_floor:
            out.append(0.0)
            continue
        vals = np.abs(np.broadcast_to(ir.evaluate(d, pts, e, w), weight.shape)) * weight
        v = float(np.max(vals))
        if not np.isfinite(v):
            raise LadderError(f"non-finite seminorm at eps={e}")
        out.append(v)
    return np.asarray(out)


# ---------------------------------------------------------------------------
# growth classification


@dataclass
class GrowthFit:
    """Fit of values ~ C eps^k omega^l; ``slope`` is the single-predictor log-log slope."""

    k: float
    l: Optional[float]
    residual: float
    slope: float
    negligible_order: int
    exact_zero: bool = False
    points_used: int = 0

    def passes(self, order: float, tol: float = 0.5) -> bool:
        return self.exact_zero or self.slope >= order - tol

    def to_dict(self):
        return {
            "k": self.k,
            "l": self.l,
            "residual": self.residual,
            "slope": self.slope,
            "negligible_order": self.negligible_order,
            "exact_zero": self.exact_zero,
            "points_used": self.points_used,
        }


def classify_growth(values, ladder: ScaleLadder, q_max: int = 6, zero_floor: float = 0.0) -> GrowthFit:
    """Least-squares fit of log(value) against (1, log eps, log omega).

    Values at or below ``zero_floor`` count as exact zeros; a family of exact zeros is
    negligible to every tested order.
    """
    v = np.asarray(values, dtype=float)
    eps = np.asarray(ladder.eps)
    om = np.asarray(ladder.omega)
    if len(v) != len(eps):
        raise LadderError("values and ladder differ in length")
    if len(v) < 4:
        raise LadderError("classify_growth needs at least 4 ladder points")
    if np.any(~np.isfinite(v)) or np.any(v < 0):
        raise LadderError("values must be finite and nonnegative")
    pos = v > zero_floor
    if not np.any(pos):
        return GrowthFit(math.inf, None, 0.0, math.inf, q_max, exact_zero=True, points_used=0)
    i_min = int(np.argmin(eps))
    neg = 0
    if not pos[i_min]:
        neg = q_max
    else:
        for q in range(1, q_max + 1):
            if v[i_min] < eps[i_min] ** q:
                neg = q
            else:
                break
    le, lw, lv = np.log(eps[pos]), np.log(om[pos]), np.log(v[pos])
    if pos.sum() < 2:
        return GrowthFit(math.inf, None, 0.0, math.inf, neg, points_used=int(pos.sum()))
    A1 = np.stack([np.ones_like(le), le], axis=1)
    slope = float(np.linalg.lstsq(A1, lv, rcond=None)[0][1])
    A = np.stack([np.ones_like(le), le, lw], axis=1)
    if pos.sum() >= 3 and np.linalg.cond(A) < 1e8:
        coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
        k, l = float(coef[1]), float(coef[2])
        res = float(np.sqrt(np.mean((A @ coef - lv) ** 2)))
    else:
        k, l = slope, None
        res = float(np.sqrt(np.mean((A1 @ np.linalg.lstsq(A1, lv, rcond=None)[0] - lv) ** 2)))
    return GrowthFit(k, l, res, slope, neg, points_used=int(pos.sum()))


def fit_slope(values, eps) -> float:
    """Slope of log(value) against log(eps)."""
    v = np.asarray(values, dtype=float)
    e = np.asarray(eps, dtype=float)
    A = np.stack([np.ones_like(e), np.log(e)], axis=1)
    return float(np.linalg.lstsq(A, np.log(v), rcond=None)[0][1])


def planted_values(ladder: ScaleLadder, k: float, l: float, C: float = 1.0) -> np.ndarray:
    return C * np.asarray(ladder.eps) ** k * np.asarray(ladder.omega) ** l
