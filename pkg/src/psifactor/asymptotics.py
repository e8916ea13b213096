"""Asymptotic expansions of the first and second kind and their Borel summation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import symbol_ir as ir
from .calculus import multi_indices
from .scale_nets import (
    ClassDescriptor,
    GrowthFit,
    LadderError,
    SampleSpec,
    ScaleLadder,
    SymbolNet,
    classify_growth,
    japanese,
    seminorm_estimate,
)
from .symbol_ir import Expr


class ExpansionError(ValueError):
    pass


@dataclass
class ExpansionTerms:
    """Terms a_j of sum_j eps^j a_j with their class bookkeeping.

    Kind 1: m_j = m - j. Kind 2: m_j = m for every j. Always l_j = sigma*j + l.
    """

    terms: Tuple[Expr, ...]
    kind: int = 1
    m: float = 0.0
    sigma: float = 0.0
    l: float = 0.0
    k: float = 0.0
    nu: float = 0.0
    dims: int = 2
    constants: Dict[Tuple[int, Tuple[int, ...], Tuple[int, ...]], float] = field(default_factory=dict)

    def __post_init__(self):
        self.terms = tuple(ir.as_expr(t) for t in self.terms)
        if self.kind not in (1, 2):
            raise ExpansionError("kind must be 1 or 2")
        if self.sigma < 0:
            raise ExpansionError("sigma must be >= 0")
        if not self.terms:
            raise ExpansionError("need at least one term")

    def __len__(self):
        return len(self.terms)

    def order(self, j: int) -> float:
        return self.m - j if self.kind == 1 else self.m

    def log_type(self, j: int) -> float:
        return self.sigma * j + self.l

    def descriptor(self, j: int) -> ClassDescriptor:
        return ClassDescriptor(self.order(j), self.k, self.nu, self.log_type(j))


def truncate_expansion(terms: ExpansionTerms, N: int) -> Expr:
    """sum_{j<N} eps^j a_j."""
    if N < 0 or N > len(terms):
        raise ExpansionError(f"N={N} outside 0..{len(terms)}")
    eps = ir.var("eps")
    return ir.add(*[ir.mul(ir.power(eps, j), terms.terms[j]) for j in range(N)])


# ---------------------------------------------------------------------------
# schedules


@dataclass
class BorelSchedule:
    mu: Tuple[float, ...]
    lam: Tuple[float, ...]
    C1: Dict[Tuple[int, Tuple[int, ...], Tuple[int, ...]], float]
    C2: Dict[Tuple[int, Tuple[int, ...], Tuple[int, ...]], float]
    estimated: bool = True
    k_scaled: float = 0.0

    def check(self) -> bool:
        ok = all(self.C1.get(key, 0.0) * self.mu[key[0]] <= 2.0 ** (-key[0] - 1) * (1 + 1e-12) for key in self.C1)
        ok &= all(self.C2.get(key, 0.0) * self.lam[key[0]] <= 2.0 ** (-key[0] - 1) * (1 + 1e-12) for key in self.C2)
        return bool(ok)

    def to_dict(self):
        return {"mu": list(self.mu), "lambda": list(self.lam), "estimated_constants": self.estimated, "k_scaled": self.k_scaled}


def schedule_from_constants(C1: Sequence[float], C2: Optional[Sequence[float]] = None) -> Tuple[List[float], List[float]]:
    """mu_j = 2^{-j-1}/C1_j (2^{-j-1} if C1_j = 0), forced strictly decreasing; lambda_j likewise, capped at 1."""
    C2 = C1 if C2 is None else C2
    mu, lam = [], []
    for j, (c1, c2) in enumerate(zip(C1, C2)):
        base = 2.0 ** (-j - 1)
        m = base / c1 if c1 > 0 else base
        lm = min(1.0, base / c2) if c2 > 0 else base
        if mu and m >= mu[-1]:
            m = mu[-1] / 2
        if lam and lm >= lam[-1]:
            lm = lam[-1] / 2
        mu.append(m)
        lam.append(lm)
    return mu, lam


def _split(alpha_beta, nf):
    return alpha_beta[:nf], alpha_beta[nf:]


def _phi_derivative_sups(freq_vars: Sequence[str], max_order: int, n: int = 4000) -> Dict[Tuple[int, ...], float]:
    """Sampled sup of |d^alpha phi| for phi(xi) = ramp(|xi|; 1, 2) over the transition shell."""
    phi = ir.ramp(ir.sqrt(ir.add(*[ir.power(ir.var(v), 2) for v in freq_vars])), 1, 2)
    rng = np.random.default_rng(7)
    g = rng.standard_normal((n, len(freq_vars)))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.uniform(1.0, 2.0, n)
    pts = {v: g[:, i] * r for i, v in enumerate(freq_vars)}
    out = {}
    for a in multi_indices(len(freq_vars), max_order):
        d = phi
        for v, k in zip(freq_vars, a):
            d = ir.differentiate(d, v, k)
        out[a] = float(np.max(np.abs(np.broadcast_to(ir.evaluate(d, pts, 0.1, 1.0), r.shape)))) if a else 1.0
    return out


def borel_schedule(terms: ExpansionTerms, ladder: ScaleLadder, samples: SampleSpec, cap: int = 6) -> BorelSchedule:
    """Pick mu_j, lambda_j from sampled uniformity constants with |alpha+beta| <= min(j, cap).

    C1 is the sup over the ladder of the seminorm divided by eps^k omega^{nu|beta| + l_j};
    the eps^-k division is the reduction of a growth-k expansion to k = 0.
    """
    fv, pv = tuple(samples.freq_vars), tuple(samples.pos_vars)
    nf = len(fv)
    pts = samples.points()
    eps = np.asarray(ladder.eps)
    om = np.asarray(ladder.omega)
    C1: Dict = {}
    for j, a in enumerate(terms.terms):
        if a is ir.ZERO:
            continue
        snet = SymbolNet(a, terms.descriptor(j), None, terms.dims)
        for ab in multi_indices(nf + len(pv), min(j, cap)):
            al, be = _split(ab, nf)
            vals = seminorm_estimate(snet, dict(zip(fv, al)), dict(zip(pv, be)), ladder, samples, points=pts, cap=cap)
            scale = eps ** terms.k * om ** (terms.nu * sum(be) + terms.log_type(j))
            c = float(np.max(vals / scale))
            if not np.isfinite(c):
                raise LadderError(f"non-finite uniformity constant for term {j}")
            C1[(j, al, be)] = c
    phis = _phi_derivative_sups(fv, min(len(terms) - 1, cap))
    C2: Dict = {}
    for (j, al, be), _ in C1.items():
        tot = 0.0
        for gam in multi_indices(nf, sum(al)):
            if any(g > a for g, a in zip(gam, al)):
                continue
            diff = tuple(a - g for a, g in zip(al, gam))
            binom = math.prod(math.comb(a, g) for a, g in zip(al, gam))
            tot += binom * 4.0 ** sum(diff) * phis[diff] * C1.get((j, gam, be), 0.0)
        C2[(j, al, be)] = tot
    c1max = [max([v for (jj, _, _), v in C1.items() if jj == j], default=0.0) for j in range(len(terms))]
    c2max = [max([v for (jj, _, _), v in C2.items() if jj == j], default=0.0) for j in range(len(terms))]
    mu, lam = schedule_from_constants(c1max, c2max)
    terms.constants.update(C1)
    return BorelSchedule(tuple(mu), tuple(lam), C1, C2, True, terms.k)


def chi(s: Expr) -> Expr:
    """0 on [0, 1], 1 on [2, inf)."""
    return ir.ramp(s, 1, 2)


def borel_sum(terms: ExpansionTerms, schedule: BorelSchedule, freq_vars: Sequence[str] = ("tau", "xi1")) -> SymbolNet:
    """sum_j eps^j [chi(mu_j/(eps omega^sigma)) + (1 - chi(...)) phi(lambda_j xi)] a_j.

    Each term is guarded by its cutoff, so inactive terms are never evaluated.
    """
    if len(schedule.mu) < len(terms):
        raise ExpansionError("schedule shorter than the term list")
    parts = []
    for j, a in enumerate(terms.terms):
        if a is ir.ZERO:
            continue
        x, phi = _cutoffs(terms, schedule, j, freq_vars)
        ej = ir.power(ir.var("eps"), j)
        parts.append(ir.mul(ej, ir.guard(x, a)))
        parts.append(ir.mul(ej, ir.guard(ir.mul(ir.sub(1, x), phi), a)))
    e = ir.add(*parts)
    _BOREL[e] = (terms, schedule, tuple(freq_vars))
    return SymbolNet(e, ClassDescriptor(terms.m, terms.k, terms.nu, terms.l), None, terms.dims)


# borel_sum expressions -> (terms, schedule, freq_vars), so that remainders can be
# formed term by term instead of by cancelling two O(1) values in floating point
_BOREL: Dict[Expr, tuple] = {}


def _cutoffs(terms, schedule, j, freq_vars):
    eps, om = ir.var("eps"), ir.var("omega")
    rad = ir.sqrt(ir.add(*[ir.power(ir.var(v), 2) for v in freq_vars]))
    x = chi(ir.div(schedule.mu[j], ir.mul(eps, ir.power(om, terms.sigma))))
    phi = ir.ramp(ir.mul(schedule.lam[j], rad), 1, 2)
    return x, phi


def borel_remainder(terms: ExpansionTerms, schedule: BorelSchedule, N: int, freq_vars=("tau", "xi1")) -> Expr:
    """borel_sum - truncation, written term by term.

    For j < N the coefficient is -(1 - chi_j)(1 - phi_j); for j >= N it is the full cutoff.
    """
    parts = []
    for j, a in enumerate(terms.terms):
        if a is ir.ZERO:
            continue
        x, phi = _cutoffs(terms, schedule, j, freq_vars)
        ej = ir.power(ir.var("eps"), j)
        if j < N:
            parts.append(ir.neg(ir.mul(ej, ir.guard(ir.mul(ir.sub(1, x), ir.sub(1, phi)), a))))
        else:
            parts.append(ir.mul(ej, ir.guard(x, a)))
            parts.append(ir.mul(ej, ir.guard(ir.mul(ir.sub(1, x), phi), a)))
    return ir.add(*parts)


def active_terms(schedule: BorelSchedule, eps: float, omega: float, sigma: float = 0.0) -> int:
    """Number of j whose first-sum cutoff chi(mu_j/(eps omega^sigma)) is nonzero."""
    return int(sum(1 for m in schedule.mu if m / (eps * omega ** sigma) > 1.0))


def regime_eps(schedule: BorelSchedule, N: int, sigma: float = 0.0, omega: float = 1.0) -> float:
    """Largest eps with chi = 1 for all j < N, i.e. eps <= min_j mu_j / (2 omega^sigma)."""
    return min(schedule.mu[:N]) / (2.0 * omega ** sigma)


# ---------------------------------------------------------------------------
# remainder verification


@dataclass
class RemainderReport:
    N: int
    kind: int
    eps: Tuple[float, ...]
    values: np.ndarray
    fit: GrowthFit
    target: float
    radial_slope: Optional[float]
    radial_target: Optional[float]
    tol: float

    @property
    def negligible(self) -> bool:
        return self.fit.exact_zero

    @property
    def passes(self) -> bool:
        ok = self.fit.passes(self.target, self.tol)
        if self.radial_slope is not None and self.radial_target is not None:
            ok &= self.radial_slope <= self.radial_target + self.tol
        return bool(ok)

    def to_rows(self):
        return [{"N": self.N, "eps": e, "remainder_seminorm": float(v)} for e, v in zip(self.eps, self.values)]

    def to_dict(self):
        return {
            "N": self.N,
            "kind": self.kind,
            "target": self.target,
            "fit": self.fit.to_dict(),
            "radial_slope": self.radial_slope,
            "radial_target": self.radial_target,
            "negligible": self.negligible,
            "passes": self.passes,
        }


def _radial_slope(r: Expr, samples: SampleSpec, eps: float, omega: float, n_dir: int = 16, n_rad: int = 12) -> Optional[float]:
    fv = samples.freq_vars
    rng = np.random.default_rng(samples.seed + 11)
    d = rng.standard_normal((n_dir, len(fv)))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    radii = samples.K * (samples.r_max / samples.K) ** np.linspace(0.25, 1, n_rad)
    y = rng.uniform(0, 2 * np.pi, (n_dir, len(samples.pos_vars)))
    pts = {v: (radii[None, :] * d[:, i:i + 1]).ravel() for i, v in enumerate(fv)}
    pts.update({v: np.repeat(y[:, i], n_rad) for i, v in enumerate(samples.pos_vars)})
    pts.update({k: np.full(n_dir * n_rad, v) for k, v in samples.fixed.items()})
    keep = np.ones(n_dir * n_rad, dtype=bool)
    if samples.region is not None:
        keep &= np.asarray(samples.region(pts), dtype=bool)
    vals = np.zeros(n_dir * n_rad)
    vals[keep] = np.abs(np.broadcast_to(ir.evaluate(r, {k: v[keep] for k, v in pts.items()}, eps, omega), (keep.sum(),)))
    prof = vals.reshape(n_dir, n_rad).max(axis=0)
    good = prof > 1e-300
    if good.sum() < 3:
        return None
    A = np.stack([np.ones(good.sum()), np.log(radii[good])], axis=1)
    return float(np.linalg.lstsq(A, np.log(prof[good]), rcond=None)[0][1])


def verify_remainder(a: SymbolNet, terms: ExpansionTerms, N: int, ladder: ScaleLadder, samples: SampleSpec,
                     kind: Optional[int] = None, tol: float = 0.5, zero_floor: float = 1e-300,
                     regime: Optional[float] = None) -> RemainderReport:
    """Fit the eps-decay of a - sum_{j<N} eps^j a_j in the remainder's class.

    ``regime`` restricts the fit to ladder points eps <= regime (where the truncation's
    cutoffs have all switched on).
    """
    kind = terms.kind if kind is None else kind
    known = _BOREL.get(a.expr)
    if known is not None and known[0] is terms:
        r = borel_remainder(terms, known[1], N, known[2])
    else:
        r = ir.sub(a.expr, truncate_expansion(terms, N))
    m_N = terms.m - N if kind == 1 else terms.m
    lad = ladder.below(regime) if regime is not None else ladder
    if len(lad) < 4:
        raise LadderError("fewer than 4 ladder points in the asymptotic regime")
    rnet = SymbolNet(r, ClassDescriptor(m_N, terms.k + N), None, a.dims, a.eps_floor)
    vals = seminorm_estimate(rnet, {}, {}, lad, samples, order=m_N)
    fit = classify_growth(vals, lad, zero_floor=zero_floor)
    target = N + terms.k
    radial = None
    if kind == 1 and not fit.exact_zero:
        radial = _radial_slope(r, samples, min(lad.eps), lad.omega_at(min(lad.eps)))
    return RemainderReport(N, kind, lad.eps, vals, fit, target, radial, m_N if kind == 1 else None, tol)


def rescale(e: Expr, freq_vars: Sequence[str] = ("tau", "xi1")) -> Expr:
    """(x, xi) -> r(x, eps xi): the change of scale relating the two kinds of expansion."""
    eps = ir.var("eps")
    return ir.substitute(e, {v: ir.mul(eps, ir.var(v)) for v in freq_vars})
