"""Quantization on periodic grids, truncated symbol composition, parametrices."""
from __future__ import annotations

import itertools
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import symbol_ir as ir
from .scale_nets import ClassDescriptor, GrowthFit, SampleSpec, ScaleLadder, SymbolNet, classify_growth
from .symbol_ir import Expr

Series = Dict[int, Expr]


class CalculusError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    axes: Tuple[str, ...]
    periods: Tuple[float, ...]
    n: Tuple[int, ...]

    def __post_init__(self):
        if not (len(self.axes) == len(self.periods) == len(self.n)):
            raise CalculusError("grid axes, periods and sizes disagree")
        if any(k < 2 for k in self.n):
            raise CalculusError("need at least 2 points per axis")

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.n)

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(self.n[axis]) * (self.periods[axis] / self.n[axis])

    def wavenumbers(self, axis: int) -> np.ndarray:
        """eta_k = 2 pi k / Lambda in FFT order, k in [-N/2, N/2)."""
        k = self.n[axis]
        return 2 * np.pi * np.fft.fftfreq(k, d=self.periods[axis] / k)

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*[self.coords(i) for i in range(self.dims)], indexing="ij")

    def to_dict(self):
        return {"axes": list(self.axes), "periods": list(self.periods), "n": list(self.n)}


def grid(axes, n, periods=None) -> GridSpec:
    axes = tuple(axes)
    n = (n,) * len(axes) if np.isscalar(n) else tuple(n)
    periods = tuple(periods) if periods is not None else (2 * np.pi,) * len(axes)
    return GridSpec(axes, tuple(float(p) for p in periods), tuple(int(k) for k in n))


@dataclass
class GridFunction:
    """eps-indexed complex samples on a periodic grid; data has shape (len(eps), *grid.shape)."""

    grid: GridSpec
    eps: Tuple[float, ...]
    data: np.ndarray

    def __post_init__(self):
        self.eps = tuple(float(e) for e in self.eps)
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (len(self.eps),) + self.grid.shape:
            raise CalculusError(f"data shape {self.data.shape} does not match grid {self.grid.shape} x {len(self.eps)} eps")
        if not np.all(np.isfinite(self.data)):
            raise CalculusError("non-finite samples")

    def __getitem__(self, i) -> np.ndarray:
        return self.data[i]

    def norm(self, i) -> float:
        return float(np.linalg.norm(self.data[i]))

    def slice(self, i) -> "GridFunction":
        return GridFunction(self.grid, (self.eps[i],), self.data[i:i + 1])

    @classmethod
    def from_function(cls, g: GridSpec, eps: Sequence[float], func) -> "GridFunction":
        mesh = g.mesh()
        data = np.stack([np.broadcast_to(func(e, *mesh), g.shape) for e in eps])
        return cls(g, tuple(eps), data)


def write_grid_function(gf: GridFunction, path) -> Path:
    """Little-endian binary: dims, N per axis, Lambda per axis, eps count, interleaved re/im."""
    path = Path(path)
    g = gf.grid
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", g.dims))
        fh.write(struct.pack(f"<{g.dims}I", *g.n))
        fh.write(struct.pack(f"<{g.dims}d", *g.periods))
        fh.write(struct.pack("<I", len(gf.eps)))
        inter = np.empty(gf.data.shape + (2,), dtype="<f8")
        inter[..., 0] = gf.data.real
        inter[..., 1] = gf.data.imag
        fh.write(inter.tobytes(order="C"))
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps({"axes": list(g.axes), "eps": list(gf.eps), "n": list(g.n), "periods": list(g.periods)}, indent=2))
    return path


def read_grid_function(path) -> GridFunction:
    path = Path(path)
    raw = path.read_bytes()
    off = 0
    (dims,) = struct.unpack_from("<I", raw, off)
    off += 4
    n = struct.unpack_from(f"<{dims}I", raw, off)
    off += 4 * dims
    periods = struct.unpack_from(f"<{dims}d", raw, off)
    off += 8 * dims
    (ne,) = struct.unpack_from("<I", raw, off)
    off += 4
    arr = np.frombuffer(raw, dtype="<f8", offset=off).reshape((ne,) + tuple(n) + (2,))
    side = path.with_suffix(path.suffix + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    axes = tuple(meta.get("axes", [f"y{i + 1}" for i in range(dims)]))
    eps = tuple(meta.get("eps", [float("nan")] * ne))
    return GridFunction(GridSpec(axes, tuple(periods), tuple(n)), eps, arr[..., 0] + 1j * arr[..., 1])


# ---------------------------------------------------------------------------
# quantization


@dataclass
class QuantizationPlan:
    """Which grid axes are quantized (axis name -> frequency variable) and fixed parameters.

    Axes without a frequency are parametric: the symbol is evaluated pointwise along them.
    ``params`` pins symbol variables that are not grid coordinates (for example the
    tau of a single time-frequency mode).
    """

    grid: GridSpec
    freq: Dict[str, Optional[str]]
    params: Dict[str, float] = field(default_factory=dict)
    chunk: int = 1 << 18

    def __post_init__(self):
        for ax in self.grid.axes:
            self.freq.setdefault(ax, None)

    def quantized_axes(self) -> List[int]:
        return [i for i, ax in enumerate(self.grid.axes) if self.freq.get(ax)]

    def parametric_axes(self) -> List[int]:
        return [i for i, ax in enumerate(self.grid.axes) if not self.freq.get(ax)]

    def frequencies(self, eps: float) -> Dict[str, np.ndarray]:
        """Semiclassical frequency set eps*eta_k per quantized axis (FFT order)."""
        return {self.freq[self.grid.axes[i]]: eps * self.grid.wavenumbers(i) for i in self.quantized_axes()}

    def dependence(self, expr: Expr) -> str:
        pos = {self.grid.axes[i] for i in self.quantized_axes()}
        frq = {self.freq[self.grid.axes[i]] for i in self.quantized_axes()}
        has_x = bool(expr.free & pos)
        has_xi = bool(expr.free & frq)
        if not has_xi:
            return "xi-free"
        if not has_x:
            return "x-free"
        return "general"


def _layout(plan: QuantizationPlan):
    g = plan.grid
    qa, pa = plan.quantized_axes(), plan.parametric_axes()
    mq = int(np.prod([g.n[i] for i in qa])) if qa else 1
    mp = int(np.prod([g.n[i] for i in pa])) if pa else 1
    qmesh = np.meshgrid(*[g.coords(i) for i in qa], indexing="ij") if qa else []
    kmesh = np.meshgrid(*[g.wavenumbers(i) for i in qa], indexing="ij") if qa else []
    pmesh = np.meshgrid(*[g.coords(i) for i in pa], indexing="ij") if pa else []
    xq = {g.axes[i]: m.ravel() for i, m in zip(qa, qmesh)}
    ek = {plan.freq[g.axes[i]]: m.ravel() for i, m in zip(qa, kmesh)}
    xp = {g.axes[i]: m.ravel() for i, m in zip(pa, pmesh)}
    return qa, pa, mq, mp, xq, ek, xp


def apply_symbol(a, data: np.ndarray, plan: QuantizationPlan, eps: float, omega: float) -> np.ndarray:
    """(Au)(x_j) = N^-n sum_k a(x_j, eps eta_k) u^_k exp(i x_j eta_k) on one eps slice."""
    expr = a.expr if isinstance(a, SymbolNet) else a
    if isinstance(a, SymbolNet) and a.eps_floor is not None and eps > a.eps_floor:
        return np.zeros(plan.grid.shape, dtype=complex)
    g = plan.grid
    data = np.asarray(data, dtype=complex)
    if data.shape != g.shape:
        raise CalculusError(f"array shape {data.shape} does not match grid {g.shape}")
    qa, pa, mq, mp, xq, ek, xp = _layout(plan)
    perm = qa + pa
    u2 = np.transpose(data, perm).reshape(mq, mp)
    kind = plan.dependence(expr)
    params = dict(plan.params)
    if kind == "xi-free":
        pts = dict(params)
        pts.update({k: v[:, None] for k, v in xq.items()})
        pts.update({k: v[None, :] for k, v in xp.items()})
        vals = np.broadcast_to(ir.evaluate(expr, pts, eps, omega), (mq, mp))
        out2 = vals * u2
    else:
        qshape = [g.n[i] for i in qa]
        uh = np.fft.fftn(u2.reshape(qshape + [mp]), axes=tuple(range(len(qa)))).reshape(mq, mp)
        if kind == "x-free":
            pts = dict(params)
            pts.update({k: eps * v[:, None] for k, v in ek.items()})
            pts.update({k: v[None, :] for k, v in xp.items()})
            vals = np.broadcast_to(ir.evaluate(expr, pts, eps, omega), (mq, mp))
            prod = (vals * uh).reshape(qshape + [mp])
            out2 = np.fft.ifftn(prod, axes=tuple(range(len(qa)))).reshape(mq, mp)
        else:
            phase = np.zeros((mq, mq))
            for i in qa:
                ax = g.axes[i]
                phase += np.outer(xq[ax], ek[plan.freq[ax]])
            E = np.exp(1j * phase)
            out2 = np.empty((mq, mp), dtype=complex)
            step = max(1, plan.chunk // (mq * mq))
            for s in range(0, mp, step):
                sl = slice(s, min(mp, s + step))
                pts = dict(params)
                pts.update({k: v[:, None, None] for k, v in xq.items()})
                pts.update({k: eps * v[None, :, None] for k, v in ek.items()})
                pts.update({k: v[None, None, sl] for k, v in xp.items()})
                A = np.broadcast_to(ir.evaluate(expr, pts, eps, omega), (mq, mq, sl.stop - sl.start))
                out2[:, sl] = np.einsum("jkp,jk,kp->jp", A, E, uh[:, sl]) / mq
    out = out2.reshape([g.n[i] for i in perm])
    return np.transpose(out, np.argsort(perm))


def quantize_apply(a, u: GridFunction, eps_index: int, plan: QuantizationPlan, omega: Optional[float] = None,
                   ladder: Optional[ScaleLadder] = None) -> GridFunction:
    eps = u.eps[eps_index]
    if omega is None:
        omega = ladder.omega_at(eps) if ladder is not None else _default_omega(eps)
    out = apply_symbol(a, u.data[eps_index], plan, eps, omega)
    return GridFunction(u.grid, (eps,), out[None])


def apply_all(a, u: GridFunction, plan: QuantizationPlan, ladder: Optional[ScaleLadder] = None) -> GridFunction:
    outs = []
    for i, e in enumerate(u.eps):
        w = ladder.omega_at(e) if ladder is not None else _default_omega(e)
        outs.append(apply_symbol(a, u.data[i], plan, e, w))
    return GridFunction(u.grid, u.eps, np.stack(outs))


def _default_omega(eps):
    return math.log(math.e / eps)


def direct_apply(expr: Expr, data: np.ndarray, plan: QuantizationPlan, eps: float, omega: float) -> np.ndarray:
    """Brute-force double sum over grid points and frequencies (a test oracle, O(N^2))."""
    g = plan.grid
    qa, pa = plan.quantized_axes(), plan.parametric_axes()
    if len(qa) != 1:
        raise CalculusError("direct_apply handles one quantized axis")
    i = qa[0]
    ax = g.axes[i]
    x = g.coords(i)
    eta = g.wavenumbers(i)
    n = g.n[i]
    u = np.moveaxis(np.asarray(data, dtype=complex), i, 0).reshape(n, -1)
    pmesh = np.meshgrid(*[g.coords(k) for k in pa], indexing="ij") if pa else []
    pvals = {g.axes[k]: m.ravel() for k, m in zip(pa, pmesh)}
    out = np.zeros_like(u)
    for p in range(u.shape[1]):
        for j in range(n):
            acc = 0j
            for k in range(n):
                uh = 0j
                for m in range(n):
                    uh += u[m, p] * np.exp(-1j * x[m] * eta[k])
                pt = dict(plan.params)
                pt[ax] = x[j]
                pt[plan.freq[ax]] = eps * eta[k]
                pt.update({kk: vv[p] for kk, vv in pvals.items()})
                acc += ir.evaluate(expr, pt, eps, omega) * uh * np.exp(1j * x[j] * eta[k])
            out[j, p] = acc / n
    shape = [n] + [g.n[k] for k in pa]
    return np.moveaxis(out.reshape(shape), 0, i)


def spectral_dz(data: np.ndarray, g: GridSpec, axis: str, eps: float) -> np.ndarray:
    """The psi-operator eps*d/dz (symbol i zeta) realized spectrally along one axis."""
    i = g.axes.index(axis)
    eta = g.wavenumbers(i)
    shape = [1] * g.dims
    shape[i] = -1
    mult = (1j * eps * eta).reshape(shape)
    if g.n[i] % 2 == 0:
        mult = mult.copy()
        mult.flat[g.n[i] // 2] = 0.0
    return np.fft.ifft(np.fft.fft(data, axis=i) * mult, axis=i)


# ---------------------------------------------------------------------------
# composition


def default_pairs(dims: int) -> List[Tuple[str, str]]:
    """(frequency, position) pairs for composition; tau pairs with t, on which symbols never depend."""
    pairs = [(f"xi{k}", f"y{k}") for k in range(1, dims)]
    pairs.append(("zeta", f"y{dims}"))
    return pairs


def multi_indices(n: int, max_total: int):
    """All multi-indices of length n with |alpha| <= max_total, by total order."""
    for total in range(max_total + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            alpha = [0] * n
            for c in combo:
                alpha[c] += 1
            yield tuple(alpha)


def _D(e: Expr, v: str, k: int) -> Expr:
    """D_v^k = (-i d/dv)^k."""
    if k == 0:
        return e
    return ir.mul((-1j) ** k, ir.differentiate(e, v, k))


def compose_terms(a: Expr, b: Expr, pairs, max_order: int) -> List[Expr]:
    """Terms by |alpha|: (1/alpha!) D_xi^alpha a * d_x^alpha b for |alpha| = 0..max_order."""
    by_order = [[] for _ in range(max_order + 1)]
    live = [(f, x) for f, x in pairs if f in a.free and x in b.free]
    for alpha in multi_indices(len(live), max_order):
        da, db = a, b
        fact = 1
        for (f, x), k in zip(live, alpha):
            if k:
                da = _D(da, f, k)
                db = ir.differentiate(db, x, k)
                fact *= math.factorial(k)
        if da is ir.ZERO or db is ir.ZERO:
            continue
        by_order[sum(alpha)].append(ir.div(ir.mul(da, db), fact))
    return [ir.add(*t) for t in by_order]


def compose_expr(a: Expr, b: Expr, N: int, dims: int, pairs=None) -> Expr:
    """sum_{|alpha| < N} eps^|alpha| / alpha! D_xi^alpha a d_x^alpha b."""
    if N < 1:
        raise CalculusError("N must be >= 1")
    pairs = pairs if pairs is not None else default_pairs(dims)
    terms = compose_terms(a, b, pairs, N - 1)
    eps = ir.var("eps")
    return ir.add(*[ir.mul(ir.power(eps, k), t) for k, t in enumerate(terms)])


def compose(a: SymbolNet, b: SymbolNet, N: int, pairs=None) -> SymbolNet:
    dims = max(a.dims, b.dims)
    e = compose_expr(a.expr, b.expr, N, dims, pairs)
    ca, cb = a.claimed, b.claimed
    d = ClassDescriptor(ca.order + cb.order, ca.growth + cb.growth, max(ca.nu, cb.nu), ca.l + cb.l)
    floor = min([f for f in (a.eps_floor, b.eps_floor) if f is not None], default=None)
    return SymbolNet(e, d, a.region, dims, floor)


def series_expr(s: Series) -> Expr:
    eps = ir.var("eps")
    return ir.add(*[ir.mul(ir.power(eps, p), t) for p, t in sorted(s.items())])


def series_add(*ss: Series) -> Series:
    out: Series = {}
    for s in ss:
        for p, t in s.items():
            out[p] = ir.add(out.get(p, ir.ZERO), t)
    return {p: t for p, t in out.items() if t is not ir.ZERO}


def series_scale(s: Series, c) -> Series:
    return {p: ir.mul(c, t) for p, t in s.items()}


def compose_series(A: Series, B: Series, max_degree: int, pairs) -> Series:
    """eps-graded composition keeping total eps-degree <= max_degree."""
    out: Series = {}
    for p, a in A.items():
        for q, b in B.items():
            room = max_degree - p - q
            if room < 0:
                continue
            for k, t in enumerate(compose_terms(a, b, pairs, room)):
                if t is ir.ZERO:
                    continue
                out[p + q + k] = ir.add(out.get(p + q + k, ir.ZERO), t)
    return {p: t for p, t in out.items() if t is not ir.ZERO}


# ---------------------------------------------------------------------------
# residuals


@dataclass
class ResidualReport:
    eps: Tuple[float, ...]
    values: np.ndarray
    fit: GrowthFit

    def to_rows(self):
        return [{"eps": e, "value": float(v)} for e, v in zip(self.eps, self.values)]


def operator_residual(c, a, b, u: GridFunction, ladder: ScaleLadder, plan: QuantizationPlan,
                      zero_floor: float = 1e-13) -> ResidualReport:
    """||OP(c)u - OP(a)OP(b)u|| / ||u|| per ladder point."""
    vals = []
    for i, (e, w) in enumerate(ladder):
        ui = u.data[i] if u.data.shape[0] == len(ladder) else u.data[0]
        nu = np.linalg.norm(ui)
        if nu == 0:
            raise CalculusError("zero-norm test function")
        lhs = apply_symbol(c, ui, plan, e, w)
        rhs = apply_symbol(a, apply_symbol(b, ui, plan, e, w), plan, e, w)
        vals.append(np.linalg.norm(lhs - rhs) / nu)
    vals = np.asarray(vals)
    return ResidualReport(ladder.eps, vals, classify_growth(vals, ladder, zero_floor=zero_floor))


# ---------------------------------------------------------------------------
# parametrix


@dataclass
class ParametrixResult:
    terms: List[Expr]
    order: float
    ellipticity_constant: float
    side: str

    def expr(self, N: Optional[int] = None) -> Expr:
        ts = self.terms if N is None else self.terms[:N]
        return series_expr({k: t for k, t in enumerate(ts)})

    def net(self, dims: int, N: Optional[int] = None) -> SymbolNet:
        return SymbolNet(self.expr(N), ClassDescriptor(order=self.order), None, dims)


def ellipticity_constant(p_m: Expr, m: float, points: Mapping[str, np.ndarray], freq_vars, eps=0.1, omega=None):
    omega = omega if omega is not None else _default_omega(eps)
    vals = np.abs(np.asarray(ir.evaluate(p_m, points, eps, omega)))
    r = np.sqrt(sum(np.asarray(points[v]) ** 2 for v in freq_vars))
    vals = np.broadcast_to(vals, r.shape)
    ratio = vals / r ** m
    i = int(np.argmin(ratio))
    return float(ratio[i]), {k: float(np.broadcast_to(v, r.shape)[i]) for k, v in points.items()}


def parametrix(p_terms: Sequence[Expr], N: int, m: float, dims: int, samples: Optional[SampleSpec] = None,
               side: str = "left", floor: float = 1e-10, pairs=None) -> ParametrixResult:
    """Terms q_{-m-k}, k < N, of an inverse of p = sum_j eps^j p_{m-j} modulo eps^N.

    Left: q # p = 1, right: p # q = 1, each solved degree by degree in eps.
    """
    if N < 1:
        raise CalculusError("N must be >= 1")
    if side not in ("left", "right"):
        raise CalculusError("side must be 'left' or 'right'")
    pairs = pairs if pairs is not None else default_pairs(dims)
    p = list(p_terms)
    pm = p[0]
    C = math.inf
    if samples is not None:
        pts = samples.points()
        C, worst = ellipticity_constant(pm, m, pts, samples.freq_vars)
        if not C > floor:
            raise CalculusError(f"ellipticity floor violated: |p_m|/|xi|^m = {C:.3g} at {worst}")
    q: List[Expr] = [ir.div(1, pm)]
    for k in range(1, N):
        acc = []
        for l in range(k):
            for j in range(0, k - l + 1):
                g = k - l - j
                if j >= len(p):
                    continue
                if side == "left":
                    terms = compose_terms(q[l], p[j], pairs, g)
                else:
                    terms = compose_terms(p[j], q[l], pairs, g)
                acc.append(terms[g])
        q.append(ir.neg(ir.div(ir.add(*acc), pm)))
    return ParametrixResult(q, -m, C, side)
