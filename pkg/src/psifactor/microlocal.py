"""Frequency regions, cutoffs at infinity, and grid tests for WF^i and conesupp^i."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import symbol_ir as ir
from .calculus import GridFunction, QuantizationPlan, apply_symbol, multi_indices
from .scale_nets import (
    GrowthFit,
    SampleSpec,
    ScaleLadder,
    SymbolNet,
    classify_growth,
    japanese,
)
from .symbol_ir import Expr

DEG = math.pi / 180


class RegionError(ValueError):
    pass


@dataclass
class ConicRegion:
    """I'_theta1 = {tau != 0, b xi^2 < sin^2(theta1) c tau^2}; 'extended' adds |zeta| <= sqrt(c1)|tau|.

    ``c`` and ``b`` are expressions in the position variables (limit coefficients).
    For kind 'generic' the membership predicate is ``mask``.
    """

    kind: str = "cone"
    theta1: float = 20 * DEG
    gamma1: float = 30 * DEG
    gamma2: float = 50 * DEG
    theta2: float = 60 * DEG
    K: float = 1.0
    c1: float = 1.0
    c: Expr = ir.ONE
    b: Expr = ir.ONE
    mask: Optional[Callable[[Dict[str, np.ndarray]], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("cone", "extended", "generic"):
            raise RegionError(f"unknown region kind {self.kind!r}")
        if not 0 < self.theta1 < self.gamma1 < self.gamma2 < self.theta2 < math.pi / 2:
            raise RegionError("need 0 < theta1 < gamma1 < gamma2 < theta2 < pi/2")
        if not self.K > 0:
            raise RegionError("K must be positive")
        if self.kind == "generic" and self.mask is None:
            raise RegionError("generic region needs a mask")
        self.c, self.b = ir.as_expr(self.c), ir.as_expr(self.b)

    def ratio(self, pts: Mapping[str, np.ndarray]) -> np.ndarray:
        """f = b xi^2 / (c tau^2); tau = 0 maps to +inf."""
        tau = np.asarray(pts["tau"], dtype=float)
        xi2 = sum(np.asarray(v, dtype=float) ** 2 for k, v in pts.items() if k.startswith("xi"))
        c = np.real(ir.evaluate(self.c, pts))
        b = np.real(ir.evaluate(self.b, pts))
        with np.errstate(divide="ignore", invalid="ignore"):
            f = b * xi2 / (c * tau ** 2)
        return np.where(tau == 0, np.inf, f)

    def contains(self, pts: Mapping[str, np.ndarray], angle: Optional[float] = None, radius: bool = False) -> np.ndarray:
        if self.kind == "generic":
            out = np.asarray(self.mask(pts), dtype=bool)
        else:
            ang = self.theta1 if angle is None else angle
            out = self.ratio(pts) < math.sin(ang) ** 2
            if self.kind == "extended" and "zeta" in pts:
                out &= np.abs(pts["zeta"]) <= math.sqrt(self.c1) * np.abs(pts["tau"])
        if radius:
            r = np.sqrt(sum(np.asarray(v) ** 2 for k, v in pts.items() if k == "tau" or k.startswith("xi")))
            out &= r >= self.K
        return out

    def sample_spec(self, count: int = 10_000, R_factor: float = 8.0, angle: Optional[float] = None, seed: int = 0,
                    freq_vars=("tau", "xi1"), pos_vars=("y1", "y2"), fixed=None) -> SampleSpec:
        """Samples of region ∩ {K <= |(tau, xi)| <= R_factor K}."""
        return SampleSpec(K=self.K, R_max=R_factor * self.K, count=count, freq_vars=tuple(freq_vars),
                          pos_vars=tuple(pos_vars), region=lambda p: self.contains(p, angle), seed=seed,
                          fixed=dict(fixed or {}))


@dataclass(frozen=True)
class ConePoint:
    """Base point y and a nonzero frequency direction."""

    y: Tuple[Tuple[str, float], ...]
    direction: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        if not any(v != 0 for _, v in self.direction):
            raise RegionError("direction must be nonzero")

    @classmethod
    def of(cls, y: Mapping[str, float], direction: Mapping[str, float]) -> "ConePoint":
        return cls(tuple(y.items()), tuple(direction.items()))

    @property
    def ymap(self) -> Dict[str, float]:
        return dict(self.y)

    @property
    def dmap(self) -> Dict[str, float]:
        return dict(self.direction)

    def unit(self) -> Dict[str, float]:
        d = self.dmap
        n = math.sqrt(sum(v * v for v in d.values()))
        return {k: v / n for k, v in d.items()}


def region_membership(p: ConePoint, R: ConicRegion) -> bool:
    pts = {k: np.array([v]) for k, v in list(p.y) + list(p.direction)}
    pts.setdefault("tau", np.array([0.0]))
    if pts["tau"][0] == 0:
        return False
    return bool(R.contains(pts)[0])


def _norm(vs: Sequence[str]) -> Expr:
    return ir.sqrt(ir.add(*[ir.power(ir.var(v), 2) for v in vs]))


def elliptic_cutoff(p: ConePoint, J: float, K: float, m: float = 0.0) -> Expr:
    """(1-phi)(xi/2K) phi((x-x0)/J) phi((xi/|xi| - xi0/|xi0|)/J) |xi|^-m.

    phi is 1 on the ball of radius 1/2 and 0 outside the unit ball; distances enter squared
    so the cutoff stays smooth at the base point.
    """
    if not (J > 0 and K > 0):
        raise RegionError("J and K must be positive")
    fv = [k for k, _ in p.direction]
    r = _norm(fv)
    big = ir.ramp(ir.div(r, 2 * K), 0.5, 1.0)
    dx2 = ir.add(*[ir.power(ir.sub(ir.var(k), v), 2) for k, v in p.y]) if p.y else ir.ZERO
    near = ir.sub(1, ir.ramp(ir.div(dx2, J * J), 0.25, 1.0))
    u = p.unit()
    cosang = ir.div(ir.add(*[ir.mul(u[k], ir.var(k)) for k in fv]), r)
    dang2 = ir.sub(2, ir.mul(2, cosang))
    cone = ir.sub(1, ir.ramp(ir.div(dang2, J * J), 0.25, 1.0))
    body = ir.mul(near, cone, ir.power(r, -m) if m else ir.ONE)
    return ir.guard(big, body)


def microlocal_cutoff_g(c1: float, K0: float, K1: float, dims: int = 2) -> Expr:
    """g = sigma(|(tau,xi)|) (1 - ramp(|zeta|/|(tau,xi)|; 2 sqrt(c1), 3 sqrt(c1)))."""
    if not 0 < K0 < K1:
        raise RegionError("need 0 < K0 < K1")
    if not c1 > 0:
        raise RegionError("c1 must be positive")
    fv = ["tau"] + [f"xi{k}" for k in range(1, dims)]
    r = _norm(fv)
    sig = ir.ramp(r, K0, K1)
    ang = ir.sub(1, ir.ramp(ir.div(ir.absval(ir.var("zeta")), r), 2 * math.sqrt(c1), 3 * math.sqrt(c1)))
    return ir.guard(sig, ang)


# ---------------------------------------------------------------------------
# WF^i on grids


@dataclass
class WavefrontReport:
    eps: Tuple[float, ...]
    values: np.ndarray
    floors: np.ndarray
    dropped: Tuple[float, ...]
    slope: float
    passes_q: Dict[int, bool]
    tol: float
    peak: float = 0.0

    @property
    def in_wf(self) -> bool:
        return not all(self.passes_q.values())

    @property
    def verdict(self) -> str:
        return "in WF^i" if self.in_wf else "not in WF^i"

    def to_dict(self):
        return {
            "eps": list(self.eps),
            "values": [float(v) for v in self.values],
            "slope": self.slope,
            "passes_q": {str(k): v for k, v in self.passes_q.items()},
            "verdict": self.verdict,
            "dropped_eps": list(self.dropped),
            "tol": self.tol,
        }


def gaussian_window(x0: Mapping[str, float], width: float, periods: Mapping[str, float]):
    """Periodized Gaussian bump centred at x0, as a function of grid meshes."""
    def win(mesh: Dict[str, np.ndarray]) -> np.ndarray:
        out = 1.0
        for k, v in x0.items():
            L = periods[k]
            d = (mesh[k] - v + L / 2) % L - L / 2
            out = out * np.exp(-d ** 2 / (2 * width ** 2))
        return out
    return win


def wavefront_test(u: GridFunction, p: ConePoint, window, cone: float = 0.3, K: float = 0.25, N_w: float = 1.0,
                   q_max: int = 6, tol: float = 0.5, noise: float = 1e-12, tail: int = 3,
                   ref: Optional[float] = None) -> WavefrontReport:
    """max over grid eta in Gamma, |eta| >= K/eps, of |F(window*u_eps)(eta)| <eta>^N_w, fitted in eps.

    Gamma = {eta: |eta/|eta| - xi0/|xi0|| < cone}. Frequencies of p.direction name grid axes
    through their paired position variables, in grid-axis order. Ladder points where the
    measured value is below ``noise`` times the peak of |F| (or ``ref`` when that is larger,
    e.g. the peak of the input when testing an image Au) count as decayed; if fewer than
    two points remain above that floor the direction passes every order. Otherwise the slope is
    fitted over the ``tail`` finest points up to the first one that drops below the floor (taken
    at the floor value, an upper bound), since superpolynomial decay only shows its rate once eps
    is small enough.
    """
    g = u.grid
    mesh = dict(zip(g.axes, g.mesh()))
    w = window(mesh) if callable(window) else np.asarray(window)
    d = p.unit()
    dirs = np.array(list(d.values()))
    if len(dirs) != g.dims:
        raise RegionError("direction must have one component per grid axis")
    kmesh = np.meshgrid(*[g.wavenumbers(i) for i in range(g.dims)], indexing="ij")
    K2 = np.stack(kmesh, -1)
    rad = np.linalg.norm(K2, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        un = K2 / rad[..., None]
    dist = np.linalg.norm(un - dirs, axis=-1)
    vol = float(np.prod([L / n for L, n in zip(g.periods, g.n)]))
    eps_used, vals, floors, dropped = [], [], [], []
    peak = 0.0
    for i, e in enumerate(u.eps):
        F = np.abs(np.fft.fftn(w * u.data[i])) * vol
        peak = max(peak, float(F.max()))
        sel = (rad >= K / e) & (dist < cone)
        if not np.any(sel):
            dropped.append(e)
            continue
        weight = (1 + rad[sel] ** 2) ** (N_w / 2)
        eps_used.append(e)
        vals.append(float(np.max(F[sel] * weight)))
        floors.append(noise * max(float(F.max()), ref or 0.0, 1e-300) * float(weight.max()))
    vals, floors = np.asarray(vals), np.asarray(floors)
    above = vals > floors
    e_arr = np.asarray(eps_used)
    if above.sum() < 2:
        slope = math.inf
    else:
        order = np.argsort(-e_arr)
        keep = []
        for j in order:
            keep.append(j)
            if not above[j] and above[keep[:-1]].any():
                break
        keep = np.asarray([j for j in keep if above[j]] + ([keep[-1]] if not above[keep[-1]] else []))
        keep = keep[np.argsort(-e_arr[keep])][-max(tail, 2):]
        le, lv = np.log(e_arr[keep]), np.log(np.maximum(vals[keep], floors[keep]))
        A = np.stack([np.ones_like(le), le], 1)
        slope = float(np.linalg.lstsq(A, lv, rcond=None)[0][1])
    passes = {q: bool(slope >= q - tol) for q in range(1, q_max + 1)}
    return WavefrontReport(tuple(eps_used), vals, floors, tuple(dropped), slope, passes, tol, peak)


# ---------------------------------------------------------------------------
# conesupp^i


@dataclass
class ConeSuppReport:
    result: bool
    fits: Dict[str, GrowthFit]

    def to_dict(self):
        return {"result": self.result, "fits": {k: f.to_dict() for k, f in self.fits.items()}}


def cone_samples(p: ConePoint, radius: float, cone: float, K: float, R: float, count: int = 2000, seed: int = 0,
                 fixed: Optional[Mapping[str, float]] = None) -> Dict[str, np.ndarray]:
    """Points of U x (Gamma ∩ {K <= |xi| <= R}) with U a ball of the given radius around p.y."""
    rng = np.random.default_rng(seed)
    u = p.unit()
    fv = list(u)
    d0 = np.array([u[k] for k in fv])
    g = d0 + rng.uniform(-cone, cone, (4 * count, len(fv))) / max(1, math.sqrt(len(fv)))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g = g[np.linalg.norm(g - d0, axis=1) < cone][:count]
    r = K * (R / K) ** rng.uniform(0, 1, len(g))
    pts = {k: g[:, i] * r for i, k in enumerate(fv)}
    for k, v in p.y:
        pts[k] = v + rng.uniform(-radius, radius, len(g))
    for k, v in (fixed or {}).items():
        pts[k] = np.full(len(g), float(v))
    return pts


def conesupp_test(a: SymbolNet, p: ConePoint, ladder: ScaleLadder, radius: float = 0.2, cone: float = 0.2,
                  K: float = 1.0, R: float = 16.0, N_max: int = 3, cap: int = 1, count: int = 2000,
                  tol: float = 0.5, fixed: Optional[Mapping[str, float]] = None) -> ConeSuppReport:
    """True when sup |d^alpha_xi d^beta_x a| <xi>^{-m+N+|alpha|} = O(eps^N) near p for all N <= N_max."""
    pts = cone_samples(p, radius, cone, K, R, count, fixed=fixed)
    fv = [k for k, _ in p.direction]
    pv = [k for k, _ in p.y]
    jap = japanese(pts, fv)
    m = a.claimed.order
    fits: Dict[str, GrowthFit] = {}
    ok = True
    for ab in multi_indices(len(fv) + len(pv), cap):
        al, be = ab[:len(fv)], ab[len(fv):]
        d = a.expr
        for v, k in list(zip(fv, al)) + list(zip(pv, be)):
            d = ir.differentiate(d, v, k)
        raw = []
        for e, w in ladder:
            if a.eps_floor is not None and e > a.eps_floor:
                raw.append(np.zeros_like(jap))
                continue
            raw.append(np.abs(np.broadcast_to(ir.evaluate(d, pts, e, w), jap.shape)))
        for N in range(1, N_max + 1):
            wgt = jap ** (-m + N + sum(al))
            vals = np.array([float(np.max(r * wgt)) if len(r) else 0.0 for r in raw])
            fit = classify_growth(vals, ladder)
            fits[f"N={N},alpha={al},beta={be}"] = fit
            ok &= fit.passes(N, tol)
    return ConeSuppReport(bool(ok), fits)


# ---------------------------------------------------------------------------
# microlocality corpus


@dataclass
class MicrolocalCase:
    name: str
    symbol: SymbolNet
    net: GridFunction
    point: ConePoint
    elliptic: bool


def ellipticity_at(a: Expr, p: ConePoint, m: float, K: float, cone: float = 0.1, radius: float = 0.1,
                   floor: float = 1e-8, fixed=None) -> Tuple[bool, float]:
    """Sampled min of |a| |xi|^-m near the point at large |xi|; elliptic when above the floor."""
    pts = cone_samples(p, radius, cone, K, 64 * K, 500, seed=3, fixed=fixed)
    r = np.sqrt(sum(pts[k] ** 2 for k, _ in p.direction))
    v = np.abs(np.broadcast_to(ir.evaluate(a, pts, 0.01, 1.0), r.shape)) / r ** m
    c = float(v.min()) if len(v) else 0.0
    return c > floor, c


def check_microlocality(cases: Sequence[MicrolocalCase], plan: QuantizationPlan, ladder: ScaleLadder, window,
                        wf_kwargs: Optional[dict] = None, cs_kwargs: Optional[dict] = None) -> List[dict]:
    """Evaluate the three implications per case; returns one record per case with any violations."""
    wf_kwargs = dict(wf_kwargs or {})
    cs_kwargs = dict(cs_kwargs or {})
    out = []
    for case in cases:
        au = np.stack([apply_symbol(case.symbol, case.net.data[i], plan, e, w) for i, (e, w) in enumerate(ladder)])
        AU = GridFunction(case.net.grid, ladder.eps, au)
        wf_u = wavefront_test(case.net, case.point, window, **wf_kwargs)
        wf_au = wavefront_test(AU, case.point, window, ref=wf_u.peak, **wf_kwargs)
        cs = conesupp_test(case.symbol, case.point, ladder, **cs_kwargs)
        v = []
        if not wf_u.in_wf and wf_au.in_wf:
            v.append("WF(Au) not contained in WF(u)")
        if cs.result and wf_au.in_wf:
            v.append("conesupp excludes point but Au is singular there")
        if case.elliptic and not wf_au.in_wf and wf_u.in_wf:
            v.append("elliptic recovery failed")
        out.append({"name": case.name, "wf_u": wf_u.verdict, "wf_Au": wf_au.verdict, "conesupp_clear": cs.result,
                    "elliptic": case.elliptic, "violations": v})
    return out
