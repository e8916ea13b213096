"""Symbol expressions a(y, tau, xi, zeta; eps, omega) as immutable, interned trees.

Nodes are hash-consed: structurally equal trees are the same Python object, so
identity comparison is structural comparison and memoized evaluation shares
common subexpressions for free.
"""
from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

CONST = "const"
VAR = "var"
ADD = "add"
MUL = "mul"
DIV = "div"
POW = "pow"
FUNC = "func"
RAMP = "ramp"
COEF = "coef"
GUARD = "guard"

FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos", "abs", "sign")
SCALES = ("eps", "omega")
RAMP_VAR = "_s"


class SymbolError(ValueError):
    pass


class SymbolSyntaxError(SymbolError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(SymbolError):
    pass


class ArityError(SymbolError):
    pass


class EvaluationError(SymbolError):
    pass


class DomainError(EvaluationError):
    pass


def coordinates(dims: int) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Position names (y1..yn) and frequency names (tau, xi1..xi_{n-1}, zeta)."""
    if dims < 1:
        raise SymbolError("dims must be >= 1")
    ys = tuple(f"y{k}" for k in range(1, dims + 1))
    freqs = ("tau",) + tuple(f"xi{k}" for k in range(1, dims)) + ("zeta",)
    return ys, freqs


def is_frequency(name: str) -> bool:
    return name == "tau" or name == "zeta" or re.fullmatch(r"xi\d+", name) is not None


def is_position(name: str) -> bool:
    return re.fullmatch(r"y\d+", name) is not None


def dual_position(freq: str, dims: int) -> Optional[str]:
    """Position variable paired with a frequency under composition (tau pairs with t, absent)."""
    if freq == "zeta":
        return f"y{dims}"
    m = re.fullmatch(r"xi(\d+)", freq)
    return f"y{m.group(1)}" if m else None


# ---------------------------------------------------------------------------
# sampled coefficients


@dataclass(eq=False)
class SampledCoefficient:
    """Real periodic samples of a coefficient of y, interpolated trigonometrically.

    With ``mollify`` set, evaluation at scale omega uses the log-scaled mollified
    family c_eps = raw * phi_{1/omega}; the raw samples are the eps -> 0 limit.
    """

    name: str
    axes: Tuple[str, ...]
    samples: np.ndarray
    periods: Tuple[float, ...]
    mollify: bool = False
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.axes = tuple(self.axes)
        self.periods = tuple(float(p) for p in self.periods)
        if self.samples.ndim != len(self.axes) or len(self.periods) != len(self.axes):
            raise SymbolError(f"coefficient {self.name}: axes, periods and samples disagree")
        if any(n < 4 for n in self.samples.shape):
            raise SymbolError(f"coefficient {self.name}: need at least 4 samples per axis")
        if not np.all(np.isfinite(self.samples)):
            raise SymbolError(f"coefficient {self.name}: non-finite samples")
        for a in self.axes:
            if not is_position(a):
                raise SymbolError(f"coefficient {self.name}: axis {a} is not a position variable")

    @classmethod
    def from_function(cls, name, axes, func, n, periods=None, mollify=False):
        axes = tuple(axes)
        ns = (n,) * len(axes) if np.isscalar(n) else tuple(n)
        periods = tuple(periods) if periods is not None else (2 * np.pi,) * len(axes)
        grids = [np.arange(k) * (p / k) for k, p in zip(ns, periods)]
        mesh = np.meshgrid(*grids, indexing="ij")
        vals = np.broadcast_to(np.asarray(func(*mesh), dtype=float), tuple(ns))
        return cls(name, axes, np.array(vals), periods, mollify)

    @property
    def shape(self):
        return self.samples.shape

    def wavenumbers(self, axis: int) -> np.ndarray:
        n = self.samples.shape[axis]
        return 2 * np.pi * np.fft.fftfreq(n, d=self.periods[axis] / n)

    def nyquist(self, axis: int) -> float:
        return np.pi * self.samples.shape[axis] / self.periods[axis]

    def spectrum(self, omega: Optional[float], derivs: Tuple[int, ...]) -> np.ndarray:
        key = (omega if self.mollify else None, derivs)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        spec = np.fft.fftn(self.samples).astype(complex)
        for ax in range(self.samples.ndim):
            eta = self.wavenumbers(ax)
            shape = [1] * self.samples.ndim
            shape[ax] = -1
            factor = np.ones_like(eta, dtype=complex)
            if self.mollify:
                factor *= mollifier_symbol(eta, omega, self.nyquist(ax), self.name)
            d = derivs[ax]
            if d:
                factor *= (1j * eta) ** d
                if self.samples.shape[ax] % 2 == 0:
                    factor[self.samples.shape[ax] // 2] = 0.0
            spec = spec * factor.reshape(shape)
        with self._lock:
            self._cache[key] = spec
        return spec

    def grid_values(self, omega: Optional[float] = None, derivs=None) -> np.ndarray:
        derivs = tuple(derivs) if derivs is not None else (0,) * self.samples.ndim
        vals = np.fft.ifftn(self.spectrum(omega, derivs))
        return vals.real

    def values_at(self, coords: Sequence[np.ndarray], omega, derivs) -> np.ndarray:
        """Trigonometric interpolation of the (mollified, differentiated) samples."""
        spec = self.spectrum(omega, tuple(derivs))
        d = self.samples.ndim
        coords = [np.asarray(c, dtype=float) for c in coords]
        bases = [self._basis_axis(ax) for ax in range(d)]
        full = np.broadcast_shapes(*[c.shape for c in coords])
        sep = _separable_axes([c.shape for c in coords], full) if d > 1 else None
        if d == 1:
            x = coords[0]
            return (_basis(x.ravel(), *bases[0]) @ spec).real.reshape(x.shape) / spec.size
        if sep is not None:
            # outer-product structure: contract one axis at a time
            out = spec
            for ax in range(d):
                b = _basis(coords[ax].ravel(), *bases[ax])
                out = np.moveaxis(np.tensordot(b, out, axes=([1], [ax])), 0, ax)
            order = np.argsort(sep)
            res = np.transpose(out.real / spec.size, order)
            shape = [1] * len(full)
            for ax in range(d):
                shape[sep[ax]] = coords[ax].size
            return np.broadcast_to(res.reshape(shape), full)
        pts = [np.broadcast_to(c, full).ravel() for c in coords]
        out = np.empty(len(pts[0]))
        chunk = 4096
        for s in range(0, len(out), chunk):
            sl = slice(s, s + chunk)
            acc = np.tensordot(_basis(pts[0][sl], *bases[0]), spec, axes=([1], [0]))
            for ax in range(1, d):
                b = _basis(pts[ax][sl], *bases[ax])
                acc = np.einsum("pk,pk...->p...", b, acc)
            out[sl] = acc.real / spec.size
        return out.reshape(full)

    def _basis_axis(self, ax):
        n = self.samples.shape[ax]
        return self.wavenumbers(ax), n % 2 == 0

    def __repr__(self):
        return f"SampledCoefficient({self.name!r}, axes={self.axes}, shape={self.samples.shape})"


def _basis(x, eta, even):
    b = np.exp(1j * np.outer(x, eta))
    if even:
        # split the Nyquist mode symmetrically so real samples interpolate to real values
        k = len(eta) // 2
        b[:, k] = np.cos(eta[k] * x)
    return b


def _separable_axes(shapes, full):
    axes = []
    for s in shapes:
        s = (1,) * (len(full) - len(s)) + tuple(s)
        big = [i for i, v in enumerate(s) if v != 1]
        if len(big) > 1:
            return None
        axes.append(big[0] if big else None)
    if None in axes or len(set(axes)) != len(axes):
        return None
    return axes


def mollifier_symbol(eta, omega, nyquist=None, name="coefficient"):
    """Fourier transform of phi_{1/omega}: 1 on |eta| <= omega, 0 beyond 2 omega, ramp between."""
    if omega is None or omega <= 0:
        raise EvaluationError(f"mollified {name} needs omega > 0")
    if nyquist is not None and 2 * omega > nyquist:
        raise EvaluationError(
            f"mollifier plateau 2*omega={2 * omega:.4g} exceeds the Nyquist wavenumber {nyquist:.4g} of {name}"
        )
    s = np.abs(np.asarray(eta, dtype=float)) / omega
    return 1.0 - ramp_values(s, 1.0, 2.0)


def ramp_values(s, s0, s1):
    """ramp(s; s0, s1): 0 below s0, 1 above s1, (1 + exp(1/(s-s0) - 1/(s1-s)))^-1 between."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= s1, 1.0, 0.0)
    inside = (s > s0) & (s < s1)
    if np.any(inside):
        t = s[inside]
        with np.errstate(over="ignore", divide="ignore"):
            e = 1.0 / (t - s0) - 1.0 / (s1 - t)
        out = out.astype(float)
        out[inside] = expit(-e)
    return out


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """One interned node. Build through the constructor functions, never directly."""

    __slots__ = ("kind", "data", "children", "free", "size", "__weakref__")

    def __init__(self, kind, data, children, free, size):
        self.kind = kind
        self.data = data
        self.children = children
        self.free = free
        self.size = size

    def __repr__(self):
        return f"Expr({to_text(self)})"

    def __str__(self):
        return to_text(self)

    def __reduce__(self):
        return (parse_symbol, (to_text(self), _dims_hint(self), _coefs_of(self)))

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise SymbolError("only integer powers are supported")
        return power(self, int(n))

    @property
    def is_const(self):
        return self.kind == CONST

    @property
    def value(self) -> complex:
        return self.data


_TABLE: Dict[tuple, Expr] = {}
_TABLE_LOCK = threading.Lock()


def _make(kind, data, children=()):
    children = tuple(children)
    key = (kind, data, tuple(id(c) for c in children))
    node = _TABLE.get(key)
    if node is not None:
        return node
    free = frozenset()
    for c in children:
        free = free | c.free
    if kind == VAR:
        free = free | {data}
    elif kind == COEF:
        free = free | set(data[0].axes)
    size = 1 + sum(c.size for c in children)
    with _TABLE_LOCK:
        node = _TABLE.get(key)
        if node is None:
            node = Expr(kind, data, children, free, size)
            # keep children alive alongside the key so ids are never reused
            _TABLE[key] = node
    return node


def _norm_const(v) -> complex:
    v = complex(v)
    re_, im_ = v.real + 0.0, v.imag + 0.0
    return complex(re_, im_)


def const(v) -> Expr:
    return _make(CONST, _norm_const(v))


ZERO = const(0)
ONE = const(1)
I = const(1j)


def var(name: str) -> Expr:
    return _make(VAR, name)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, complex, np.number)):
        return const(x)
    raise SymbolError(f"cannot convert {x!r} to a symbol expression")


def _raw(kind, data, children):
    return _make(kind, data, children)


# -- smart constructors -------------------------------------------------------


def _factor_map(e: Expr):
    """Split a rational monomial into (constant, [(base, exponent)])."""
    if e.kind == CONST:
        return e.value, []
    if e.kind == MUL:
        c = 1.0 + 0j
        items = []
        for ch in e.children:
            cc, it = _factor_map(ch)
            c *= cc
            items.extend(it)
        return c, items
    if e.kind == DIV:
        cn, num = _factor_map(e.children[0])
        cd, den = _factor_map(e.children[1])
        return cn / cd, num + [(b, -n) for b, n in den]
    if e.kind == POW:
        return 1.0 + 0j, [(e.children[0], e.data)]
    return 1.0 + 0j, [(e, 1)]


def _from_factor_map(c: complex, items) -> Expr:
    exps: Dict[int, list] = {}
    order = []
    for b, n in items:
        slot = exps.get(id(b))
        if slot is None:
            exps[id(b)] = [b, n]
            order.append(id(b))
        else:
            slot[1] += n
    num, den = [], []
    for k in order:
        b, n = exps[k]
        if n > 0:
            num.append(_pow_node(b, n))
        elif n < 0:
            den.append(_pow_node(b, -n))
    # folding sqrt(u)^2 -> u may expose constants; re-split those
    num2 = []
    for f in num:
        if f.kind == CONST:
            c *= f.value
        else:
            num2.append(f)
    den2 = []
    for f in den:
        if f.kind == CONST:
            c /= f.value
        else:
            den2.append(f)
    c = _norm_const(c)
    if c == 0:
        return ZERO
    top = _mul_node(c, num2)
    if not den2:
        return top
    bottom = _mul_node(1.0, den2)
    return _raw(DIV, None, (top, bottom))


def _mul_node(c, factors):
    factors = list(factors)
    if c != 1:
        factors.insert(0, const(c))
    if not factors:
        return const(c)
    if len(factors) == 1:
        return factors[0]
    return _raw(MUL, None, factors)


def _pow_node(b, n):
    if n == 1:
        return b
    if b.kind == FUNC and b.data == "sqrt" and n % 2 == 0:
        return _pow_node(b.children[0], n // 2) if n > 2 else b.children[0]
    if b.kind == CONST:
        return const(b.value ** n)
    return _raw(POW, n, (b,))


def mul(*xs) -> Expr:
    xs = [as_expr(x) for x in xs]
    if any(x.kind == CONST and x.value == 0 for x in xs):
        return ZERO
    c = 1.0 + 0j
    items = []
    for x in xs:
        cc, it = _factor_map(x)
        c *= cc
        items.extend(it)
    return _from_factor_map(c, items)


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if b.kind == CONST and b.value == 0:
        raise ZeroDivisionError("symbolic division by zero")
    if a.kind == CONST and a.value == 0:
        return ZERO
    ca, ia = _factor_map(a)
    cb, ib = _factor_map(b)
    return _from_factor_map(ca / cb, ia + [(x, -n) for x, n in ib])


def power(b, n: int) -> Expr:
    b = as_expr(b)
    if n == 0:
        return ONE
    if b.kind == CONST:
        if b.value == 0 and n < 0:
            raise ZeroDivisionError("0 to a negative power")
        return const(b.value ** n)
    c, items = _factor_map(b)
    if b.kind in (MUL, DIV, POW):
        return _from_factor_map(c ** n, [(x, k * n) for x, k in items])
    return _from_factor_map(1.0, [(b, n)])


def neg(x) -> Expr:
    return mul(-1, x)


def _split_coef(t: Expr):
    if t.kind == CONST:
        return t.value, ONE
    if t.kind == MUL and t.children[0].kind == CONST:
        rest = t.children[1:]
        return t.children[0].value, rest[0] if len(rest) == 1 else _raw(MUL, None, rest)
    if t.kind == DIV:
        c, key = _split_coef(t.children[0])
        if c != 1:
            return c, _raw(DIV, None, (key, t.children[1]))
    return 1.0 + 0j, t


def add(*xs) -> Expr:
    terms = []
    for x in xs:
        x = as_expr(x)
        if x.kind == ADD:
            terms.extend(x.children)
        else:
            terms.append(x)
    coefs: Dict[int, list] = {}
    order = []
    constant = 0.0 + 0j
    for t in terms:
        if t.kind == CONST:
            constant += t.value
            continue
        c, key = _split_coef(t)
        slot = coefs.get(id(key))
        if slot is None:
            coefs[id(key)] = [key, c]
            order.append(id(key))
        else:
            slot[1] += c
    out = []
    for k in order:
        key, c = coefs[k]
        if c == 0:
            continue
        out.append(key if c == 1 else mul(c, key))
    constant = _norm_const(constant)
    if constant != 0:
        out.append(const(constant))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return _raw(ADD, None, out)


def sub(a, b) -> Expr:
    return add(a, neg(b))


def func(name: str, arg) -> Expr:
    arg = as_expr(arg)
    if name not in FUNCTIONS:
        raise UnknownIdentifierError(f"unknown function {name}")
    if arg.kind == CONST:
        v = arg.value
        if name == "sqrt":
            if v.imag == 0 and v.real >= 0:
                return const(math.sqrt(v.real))
        elif name == "exp" and v == 0:
            return ONE
        elif name == "log" and v == 1:
            return ZERO
        elif name == "sin" and v == 0:
            return ZERO
        elif name == "cos" and v == 0:
            return ONE
        elif name == "abs":
            return const(abs(v))
        elif name == "sign" and v.imag == 0:
            return const(float(np.sign(v.real)))
    return _raw(FUNC, name, (arg,))


def sqrt(x):
    return func("sqrt", x)


def exp(x):
    return func("exp", x)


def log(x):
    return func("log", x)


def sin(x):
    return func("sin", x)


def cos(x):
    return func("cos", x)


def absval(x):
    return func("abs", x)


def ramp(arg, s0: float, s1: float, order: int = 0) -> Expr:
    """Smooth ramp primitive, 0 for arg <= s0 and 1 for arg >= s1."""
    arg = as_expr(arg)
    s0, s1 = float(s0), float(s1)
    if not s0 < s1:
        raise SymbolError("ramp needs s0 < s1")
    if arg.kind == CONST and arg.value.imag == 0:
        if order == 0:
            return const(float(ramp_values(arg.value.real, s0, s1)))
        if arg.value.real <= s0 or arg.value.real >= s1:
            return ZERO
    return _raw(RAMP, (s0, s1, int(order)), (arg,))


def guard(cut, body) -> Expr:
    """cut * body, with body evaluated only where cut is nonzero (zero extension)."""
    cut, body = as_expr(cut), as_expr(body)
    if cut.kind == CONST:
        return mul(cut, body) if cut.value != 0 else ZERO
    if body.kind == CONST:
        return mul(cut, body)
    return _raw(GUARD, None, (cut, body))


def coef(c: SampledCoefficient, derivs: Optional[Tuple[int, ...]] = None) -> Expr:
    derivs = tuple(derivs) if derivs is not None else (0,) * len(c.axes)
    if len(derivs) != len(c.axes):
        raise ArityError(f"coefficient {c.name} takes {len(c.axes)} arguments")
    return _make(COEF, (c, derivs))


# ---------------------------------------------------------------------------
# differentiation

_DIFF_CACHE: Dict[tuple, Expr] = {}


def differentiate(e: Expr, v: str, order: int = 1) -> Expr:
    """Exact symbolic derivative d^order e / dv^order."""
    if order < 0:
        raise SymbolError("order must be >= 0")
    for _ in range(order):
        e = _diff(e, v)
    return e


def _diff(e: Expr, v: str) -> Expr:
    if v not in e.free:
        return ZERO
    key = (id(e), v)
    hit = _DIFF_CACHE.get(key)
    if hit is not None:
        return hit
    k = e.kind
    ch = e.children
    if k == VAR:
        out = ONE
    elif k == ADD:
        out = add(*[_diff(c, v) for c in ch])
    elif k == MUL:
        terms = []
        for i, c in enumerate(ch):
            dc = _diff(c, v)
            if dc is ZERO:
                continue
            terms.append(mul(*ch[:i], dc, *ch[i + 1:]))
        out = add(*terms)
    elif k == DIV:
        a, b = ch
        da, db = _diff(a, v), _diff(b, v)
        out = sub(div(da, b), div(mul(a, db), power(b, 2)))
    elif k == POW:
        b = ch[0]
        n = e.data
        out = mul(n, power(b, n - 1), _diff(b, v))
    elif k == FUNC:
        u = ch[0]
        du = _diff(u, v)
        name = e.data
        if name == "sqrt":
            out = div(du, mul(2, e))
        elif name == "exp":
            out = mul(e, du)
        elif name == "log":
            out = div(du, u)
        elif name == "sin":
            out = mul(cos(u), du)
        elif name == "cos":
            out = neg(mul(sin(u), du))
        elif name == "abs":
            out = mul(func("sign", u), du)
        elif name == "sign":
            out = ZERO
        else:  # pragma: no cover
            raise SymbolError(name)
    elif k == RAMP:
        s0, s1, order = e.data
        out = mul(ramp(ch[0], s0, s1, order + 1), _diff(ch[0], v))
    elif k == COEF:
        c, derivs = e.data
        ax = c.axes.index(v)
        d = list(derivs)
        d[ax] += 1
        out = coef(c, tuple(d))
    elif k == GUARD:
        cut, body = ch
        out = add(guard(_diff(cut, v), body), guard(cut, _diff(body, v)))
    else:
        out = ZERO
    _DIFF_CACHE[key] = out
    return out


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (coefficient arguments must stay untouched)."""
    memo: Dict[int, Expr] = {}
    mapping = {k: as_expr(v) for k, v in mapping.items()}

    def go(n: Expr) -> Expr:
        if not (n.free & mapping.keys()):
            return n
        hit = memo.get(id(n))
        if hit is not None:
            return hit
        if n.kind == VAR:
            out = mapping.get(n.data, n)
        elif n.kind == COEF:
            raise SymbolError("cannot substitute into coefficient arguments")
        else:
            out = rebuild(n, [go(c) for c in n.children])
        memo[id(n)] = out
        return out

    return go(e)


def rebuild(n: Expr, kids) -> Expr:
    k = n.kind
    if k == ADD:
        return add(*kids)
    if k == MUL:
        return mul(*kids)
    if k == DIV:
        return div(*kids)
    if k == POW:
        return power(kids[0], n.data)
    if k == FUNC:
        return func(n.data, kids[0])
    if k == RAMP:
        return ramp(kids[0], *n.data)
    if k == GUARD:
        return guard(*kids)
    return n


def simplify(e: Expr) -> Expr:
    """Canonicalize through the smart constructors; never grows the tree."""
    memo: Dict[int, Expr] = {}

    def go(n: Expr) -> Expr:
        hit = memo.get(id(n))
        if hit is not None:
            return hit
        if not n.children:
            out = n
        else:
            out = rebuild(n, [go(c) for c in n.children])
            if out.size > n.size:
                out = n
        memo[id(n)] = out
        return out

    out = go(e)
    return out if out.size <= e.size else e


def node_count(e: Expr) -> int:
    return e.size


# ---------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, point: Mapping[str, object], eps: float = 1.0, omega: float = 1.0):
    """Evaluate on (broadcastable) arrays of coordinates; returns complex values."""
    ev = Evaluator(point, eps, omega)
    out = ev.eval(e)
    if np.ndim(out) == 0:
        return complex(out)
    return out


class Evaluator:
    def __init__(self, point: Mapping[str, object], eps: float, omega: float):
        if not (0 < eps <= 1):
            raise EvaluationError(f"eps must lie in (0, 1], got {eps}")
        if not omega > 0:
            raise EvaluationError(f"omega must be positive, got {omega}")
        self.point = {k: np.asarray(v, dtype=float) if np.isrealobj(v) else np.asarray(v) for k, v in point.items()}
        self.point["eps"] = np.asarray(float(eps))
        self.point["omega"] = np.asarray(float(omega))
        self.eps = float(eps)
        self.omega = float(omega)
        self.memo: Dict[int, np.ndarray] = {}

    def eval(self, e: Expr):
        missing = [v for v in e.free if v not in self.point]
        if missing:
            raise EvaluationError(f"unassigned variables: {sorted(missing)}")
        return self._ev(e)

    def _where(self, mask):
        """Describe the first offending point of a boolean mask."""
        arrs = {k: v for k, v in self.point.items() if k not in SCALES}
        shape = np.broadcast_shapes(*[np.shape(v) for v in arrs.values()], np.shape(mask)) if arrs else np.shape(mask)
        m = np.broadcast_to(mask, shape)
        idx = tuple(np.argwhere(m)[0]) if m.ndim else ()
        at = {k: float(np.broadcast_to(v, shape)[idx].real) for k, v in arrs.items()}
        return f"{at} (eps={self.eps}, omega={self.omega})"

    def _ev(self, e: Expr):
        hit = self.memo.get(id(e))
        if hit is not None:
            return hit
        k = e.kind
        if k == CONST:
            out = np.asarray(e.value)
        elif k == VAR:
            out = self.point[e.data]
        elif k == ADD:
            out = self._ev(e.children[0])
            for c in e.children[1:]:
                out = out + self._ev(c)
        elif k == MUL:
            out = self._ev(e.children[0])
            for c in e.children[1:]:
                out = out * self._ev(c)
        elif k == DIV:
            den = self._ev(e.children[1])
            bad = den == 0
            if np.any(bad):
                raise EvaluationError(f"division by zero in {to_text(e)[:80]} at {self._where(bad)}")
            out = self._ev(e.children[0]) / den
        elif k == POW:
            base = self._ev(e.children[0])
            n = e.data
            if n < 0:
                bad = base == 0
                if np.any(bad):
                    raise EvaluationError(f"zero to a negative power at {self._where(bad)}")
                out = 1.0 / base ** (-n)
            else:
                out = base ** n
        elif k == FUNC:
            out = self._func(e)
        elif k == RAMP:
            out = self._ramp(e)
        elif k == COEF:
            c, derivs = e.data
            coords = [self.point[a] for a in c.axes]
            out = c.values_at(coords, self.omega if c.mollify else None, derivs)
        elif k == GUARD:
            out = self._guard(e)
        else:  # pragma: no cover
            raise SymbolError(k)
        self.memo[id(e)] = out
        return out

    def _func(self, e):
        u = self._ev(e.children[0])
        name = e.data
        if name == "sqrt":
            uc = np.asarray(u, dtype=complex)
            scale = np.maximum(1.0, np.abs(uc))
            neg_real = (np.abs(uc.imag) <= 1e-14 * scale) & (uc.real < -1e-13 * scale)
            if np.any(neg_real):
                raise DomainError(f"sqrt of a negative real at {self._where(neg_real)}")
            real_axis = np.abs(uc.imag) <= 1e-14 * scale
            uc = np.where(real_axis, np.maximum(uc.real, 0.0) + 0j, uc)
            return np.sqrt(uc)
        if name == "log":
            bad = u == 0
            if np.any(bad):
                raise DomainError(f"log of zero at {self._where(bad)}")
            return np.log(np.asarray(u, dtype=complex))
        if name == "exp":
            return np.exp(u)
        if name == "sin":
            return np.sin(u)
        if name == "cos":
            return np.cos(u)
        if name == "abs":
            return np.abs(u)
        if name == "sign":
            u = np.asarray(u)
            return np.sign(u.real) if np.iscomplexobj(u) else np.sign(u)
        raise SymbolError(name)  # pragma: no cover

    def _ramp(self, e):
        s0, s1, order = e.data
        u = np.asarray(self._ev(e.children[0]))
        if np.iscomplexobj(u):
            if np.any(np.abs(u.imag) > 1e-12 * np.maximum(1.0, np.abs(u.real))):
                raise DomainError(f"ramp of a non-real argument at {self._where(np.abs(u.imag) > 0)}")
            u = u.real
        if order == 0:
            return ramp_values(u, s0, s1)
        out = np.zeros(u.shape)
        inside = (u > s0) & (u < s1)
        if np.any(inside):
            sub_ev = Evaluator({RAMP_VAR: u[inside]}, self.eps, self.omega)
            out[inside] = np.real(sub_ev.eval(_ramp_template(s0, s1, order)))
        return out

    def _guard(self, e):
        cut_e, body_e = e.children
        cut = np.asarray(self._ev(cut_e))
        mask = cut != 0
        if np.all(mask):
            return cut * self._ev(body_e)
        if not np.any(mask):
            return np.zeros(cut.shape, dtype=complex)
        arrs = {k: v for k, v in self.point.items() if k not in SCALES}
        shape = np.broadcast_shapes(cut.shape, *[np.shape(v) for v in arrs.values()])
        full_mask = np.broadcast_to(mask, shape)
        sub_pts = {k: np.broadcast_to(v, shape)[full_mask] for k, v in arrs.items() if k in body_e.free}
        sub_ev = Evaluator(sub_pts, self.eps, self.omega)
        vals = sub_ev.eval(body_e)
        body = np.zeros(shape, dtype=complex)
        body[full_mask] = np.broadcast_to(vals, (int(full_mask.sum()),))
        return np.broadcast_to(cut, shape) * body


_RAMP_TEMPLATES: Dict[tuple, Expr] = {}


def _ramp_template(s0, s1, order):
    """order-th derivative of the ramp as an expression in the private variable _s."""
    key = (s0, s1, order)
    hit = _RAMP_TEMPLATES.get(key)
    if hit is not None:
        return hit
    s = var(RAMP_VAR)
    r = ramp(s, s0, s1, 0)
    g = add(power(sub(s, s0), -2), power(sub(s1, s), -2))
    first = mul(r, sub(1, r), g)
    out = differentiate(first, RAMP_VAR, order - 1)
    _RAMP_TEMPLATES[key] = out
    return out


# ---------------------------------------------------------------------------
# homogeneity


def _struct_degree(e: Expr, memo) -> Optional[Fraction]:
    hit = memo.get(id(e), False)
    if hit is not False:
        return hit
    k = e.kind
    out: Optional[Fraction]
    if k == CONST:
        out = Fraction(0)
    elif k == VAR:
        out = Fraction(1) if is_frequency(e.data) else Fraction(0)
    elif k == COEF:
        out = Fraction(0)
    elif k == ADD:
        ds = [_struct_degree(c, memo) for c in e.children]
        out = ds[0] if all(d is not None and d == ds[0] for d in ds) else None
    elif k == MUL:
        ds = [_struct_degree(c, memo) for c in e.children]
        out = None if any(d is None for d in ds) else sum(ds, Fraction(0))
    elif k == DIV:
        a, b = (_struct_degree(c, memo) for c in e.children)
        out = None if a is None or b is None else a - b
    elif k == POW:
        d = _struct_degree(e.children[0], memo)
        out = None if d is None else d * e.data
    elif k == FUNC:
        d = _struct_degree(e.children[0], memo)
        if d is None:
            out = None
        elif e.data == "sqrt":
            out = d / 2
        elif e.data == "abs":
            out = d
        else:
            out = Fraction(0) if d == 0 else None
    elif k == RAMP:
        d = _struct_degree(e.children[0], memo)
        out = Fraction(0) if d == 0 else None
    elif k == GUARD:
        a, b = (_struct_degree(c, memo) for c in e.children)
        out = b if a == 0 and b is not None else None
    else:  # pragma: no cover
        out = None
    memo[id(e)] = out
    return out


def homogeneous_degree(e: Expr, seed: int = 0) -> Optional[Fraction]:
    """Degree m with e(y, lam*(tau,xi,zeta)) = lam^m e, or None."""
    m = _struct_degree(e, {})
    if m is None:
        return None
    freqs = sorted(v for v in e.free if is_frequency(v))
    if not freqs:
        return m
    rng = np.random.default_rng(seed)
    n = 100
    pts = {}
    for v in e.free:
        if v in SCALES:
            continue
        if v == "tau":
            pts[v] = rng.uniform(0.5, 2.0, n) * rng.choice([-1.0, 1.0], n)
        elif is_frequency(v):
            pts[v] = rng.uniform(-0.3, 0.3, n)
        else:
            pts[v] = rng.uniform(0.0, 2 * np.pi, n)
    try:
        base = np.asarray(evaluate(e, pts, 0.1, 2.0))
        for lam in (2.0, 3.0):
            scaled = dict(pts)
            for v in freqs:
                scaled[v] = lam * pts[v]
            val = np.asarray(evaluate(e, scaled, 0.1, 2.0))
            want = lam ** float(m) * base
            err = np.abs(val - want)
            if np.any(err > 1e-10 * np.maximum(np.abs(want), 1e-300) + 1e-300):
                if np.any(err > 1e-10 * np.maximum(np.abs(want), 1e-12)):
                    return None
    except EvaluationError:
        return None
    return m


# ---------------------------------------------------------------------------
# printing


def _fmt_real(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _fmt_const(v: complex) -> str:
    if v.imag == 0:
        s = _fmt_real(v.real)
        return f"({s})" if v.real < 0 else s
    if v.real == 0:
        s = _fmt_real(abs(v.imag)) + "j"
        return f"(-{s})" if v.imag < 0 else s
    sign = "-" if v.imag < 0 else "+"
    return f"({_fmt_real(v.real)}{sign}{_fmt_real(abs(v.imag))}j)"


def _coef_name(c: SampledCoefficient, derivs) -> str:
    if any(derivs):
        return f"{c.name}__d" + "_".join(str(d) for d in derivs)
    return c.name


def to_text(e: Expr) -> str:
    """DSL text; parse_symbol(to_text(e)) rebuilds e."""
    memo: Dict[int, str] = {}

    def p(n: Expr) -> str:
        hit = memo.get(id(n))
        if hit is not None:
            return hit
        k = n.kind
        if k == CONST:
            s = _fmt_const(n.value)
        elif k == VAR:
            s = n.data
        elif k == ADD:
            s = " + ".join(wrap(c, (ADD,)) for c in n.children)
        elif k == MUL:
            s = "*".join(wrap(c, (ADD, MUL, DIV)) for c in n.children)
        elif k == DIV:
            s = wrap(n.children[0], (ADD, MUL, DIV)) + "/" + wrap(n.children[1], (ADD, MUL, DIV))
        elif k == POW:
            s = wrap(n.children[0], (ADD, MUL, DIV, POW, CONST)) + "^" + str(n.data)
        elif k == FUNC:
            s = f"{n.data}({p(n.children[0])})"
        elif k == RAMP:
            s0, s1, order = n.data
            extra = f", {order}" if order else ""
            s = f"ramp({p(n.children[0])}, {repr(s0)}, {repr(s1)}{extra})"
        elif k == COEF:
            c, derivs = n.data
            s = f"{_coef_name(c, derivs)}({', '.join(c.axes)})"
        elif k == GUARD:
            s = f"guard({p(n.children[0])}, {p(n.children[1])})"
        else:  # pragma: no cover
            raise SymbolError(k)
        memo[id(n)] = s
        return s

    def wrap(n, kinds):
        s = p(n)
        return f"({s})" if n.kind in kinds and not (n.kind == CONST and s.startswith("(")) else s

    return p(e)


def _dims_hint(e: Expr) -> int:
    n = 1
    for v in e.free:
        m = re.fullmatch(r"y(\d+)", v)
        if m:
            n = max(n, int(m.group(1)))
        m = re.fullmatch(r"xi(\d+)", v)
        if m:
            n = max(n, int(m.group(1)) + 1)
    return n


def _coefs_of(e: Expr) -> Dict[str, SampledCoefficient]:
    out = {}
    seen = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        if n.kind == COEF:
            out[n.data[0].name] = n.data[0]
        stack.extend(n.children)
    return out


def coefficients_in(e: Expr) -> Dict[str, SampledCoefficient]:
    return _coefs_of(e)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            off = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise SymbolSyntaxError(f"unexpected character {text[off]!r}", off)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text, dims, coefficients):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        ys, freqs = coordinates(dims)
        self.vars = set(ys) | set(freqs) | set(SCALES)
        self.coefs = dict(coefficients or {})

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            what = "end of input" if t[0] == "end" else repr(t[1])
            raise SymbolSyntaxError(f"expected {value!r}, found {what}", t[2])
        return t

    def parse(self):
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise SymbolSyntaxError(f"unexpected {t[1]!r}", t[2])
        return e

    def expr(self):
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else _raw_neg(t))
        if len(terms) == 1:
            return terms[0]
        if all(t.kind == CONST for t in terms):
            return const(sum(t.value for t in terms))
        return _raw(ADD, None, terms)

    def term(self):
        run = [self.factor()]
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            f = self.factor()
            if op == "*":
                run.append(f)
            else:
                num = _raw_mul(run)
                if num.kind == CONST and f.kind == CONST:
                    if f.value == 0:
                        raise SymbolSyntaxError("division by constant zero", self.toks[self.i - 1][2])
                    run = [const(num.value / f.value)]
                else:
                    run = [_raw(DIV, None, (num, f))]
        return _raw_mul(run)

    def factor(self):
        t = self.peek()
        if t[0] == "op" and t[1] in ("-", "+"):
            self.take()
            f = self.factor()
            return _raw_neg(f) if t[1] == "-" else f
        b = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            sign = 1
            if self.peek()[1] in ("-", "+") and self.peek()[0] == "op":
                sign = -1 if self.take()[1] == "-" else 1
            t = self.take()
            if t[0] != "num" or not re.fullmatch(r"\d+", t[1]):
                raise SymbolSyntaxError("expected an integer exponent", t[2])
            n = sign * int(t[1])
            if b.kind == CONST:
                return const(b.value ** n)
            return _raw(POW, n, (b,))
        return b

    def base(self):
        t = self.take()
        if t[0] == "num":
            s = t[1]
            return const(complex(0, float(s[:-1]))) if s.endswith("j") else const(float(s))
        if t[0] == "op" and t[1] == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t[0] == "id":
            name = t[1]
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                return self.call(name, args, t[2])
            if name in self.vars:
                return var(name)
            if name == "i":
                return I
            if name == "pi":
                return const(math.pi)
            if name in FUNCTIONS or name in ("ramp", "guard") or name in self.coefs:
                raise ArityError(f"{name} must be called with arguments (offset {t[2]})")
            raise UnknownIdentifierError(f"unknown identifier {name!r} at offset {t[2]}")
        what = "end of input" if t[0] == "end" else repr(t[1])
        raise SymbolSyntaxError(f"unexpected {what}", t[2])

    def call(self, name, args, offset):
        if name in FUNCTIONS:
            if len(args) != 1:
                raise ArityError(f"{name} takes 1 argument, got {len(args)} (offset {offset})")
            a = args[0]
            if a.kind == CONST:
                return func(name, a)
            return _raw(FUNC, name, (a,))
        if name == "ramp":
            if len(args) not in (3, 4):
                raise ArityError(f"ramp takes 3 or 4 arguments, got {len(args)} (offset {offset})")
            bounds = []
            for a in args[1:]:
                if a.kind != CONST or a.value.imag != 0:
                    raise SymbolSyntaxError("ramp bounds and order must be real constants", offset)
                bounds.append(a.value.real)
            order = int(bounds[2]) if len(bounds) == 3 else 0
            if not bounds[0] < bounds[1]:
                raise SymbolSyntaxError("ramp needs s0 < s1", offset)
            return _raw(RAMP, (float(bounds[0]), float(bounds[1]), order), (args[0],))
        if name == "guard":
            if len(args) != 2:
                raise ArityError(f"guard takes 2 arguments, got {len(args)} (offset {offset})")
            return _raw(GUARD, None, tuple(args))
        m = re.fullmatch(r"(.+?)__d(\d+(?:_\d+)*)", name)
        base_name, derivs = (m.group(1), tuple(int(x) for x in m.group(2).split("_"))) if m else (name, None)
        if base_name in self.coefs:
            c = self.coefs[base_name]
            if len(args) != len(c.axes):
                raise ArityError(f"{base_name} takes {len(c.axes)} arguments, got {len(args)} (offset {offset})")
            for a, ax in zip(args, c.axes):
                if a.kind != VAR or a.data != ax:
                    raise SymbolSyntaxError(f"{base_name} must be called as {base_name}({', '.join(c.axes)})", offset)
            return coef(c, derivs)
        raise UnknownIdentifierError(f"unknown function {name!r} at offset {offset}")


def _raw_neg(e):
    if e.kind == CONST:
        return const(-e.value)
    return _raw(MUL, None, (const(-1), e))


def _raw_mul(run):
    if len(run) == 1:
        return run[0]
    if all(f.kind == CONST for f in run):
        v = 1.0 + 0j
        for f in run:
            v *= f.value
        return const(v)
    return _raw(MUL, None, run)


def parse_symbol(text: str, dims: int, coefficients: Optional[Mapping[str, SampledCoefficient]] = None) -> Expr:
    """Parse DSL text into an expression over y1..yn, tau, xi1.., zeta, eps, omega."""
    if dims < 1:
        raise SymbolError("dims must be >= 1")
    return _Parser(text, dims, coefficients).parse()


def free_variables(e: Expr) -> frozenset:
    return e.free


def walk(e: Expr) -> Iterable[Expr]:
    seen = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        yield n
        stack.extend(n.children)
