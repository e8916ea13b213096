"""Depth marching for the one-way equation and a second-order reference solver, per time-frequency mode."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import symbol_ir as ir
from .calculus import GridSpec
from .symbol_ir import Expr


class DemoError(ValueError):
    pass


@dataclass
class XOperator:
    """Quantization of a symbol a(y1, y2, tau, xi1) along y1 at fixed depth y2 and fixed tau."""

    expr: Expr
    x: np.ndarray
    eta: np.ndarray
    tau: float
    eps: float
    omega: float
    zvar: str = "y2"

    def __post_init__(self):
        self.n = len(self.x)
        self.E = np.exp(1j * np.outer(self.x, self.eta)) / self.n
        self.z_free = self.zvar not in self.expr.free
        self._fixed = None

    def matrix(self, z: float, cols=None) -> np.ndarray:
        """a(x_j, z, eps eta_k) exp(i x_j eta_k) / n, optionally restricted to columns ``cols``."""
        if self.z_free and self._fixed is not None and cols is None:
            return self._fixed
        eta = self.eta if cols is None else self.eta[cols]
        E = self.E if cols is None else self.E[:, cols]
        pts = {"y1": self.x[:, None], "xi1": self.eps * eta[None, :], self.zvar: z, "tau": self.tau}
        m = np.broadcast_to(ir.evaluate(self.expr, pts, self.eps, self.omega), E.shape) * E
        if self.z_free and cols is None:
            self._fixed = m
        return m

    def __call__(self, u: np.ndarray, z: float, mode_tol: float = 0.0) -> np.ndarray:
        uh = np.fft.fft(u)
        if mode_tol > 0 and not self.z_free:
            cols = np.nonzero(np.abs(uh) > mode_tol * np.abs(uh).max())[0]
            return self.matrix(z, cols) @ uh[cols]
        return self.matrix(z) @ uh


def rk4(f: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, z0: float, z1: float, steps: int) -> np.ndarray:
    h = (z1 - z0) / steps
    y = y0
    z = z0
    for _ in range(steps):
        k1 = f(z, y)
        k2 = f(z + h / 2, y + h / 2 * k1)
        k3 = f(z + h / 2, y + h / 2 * k2)
        k4 = f(z + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        z += h
    return y


def march(f, y0, Z: float, levels: int, steps_per_level: int):
    """RK4 across ``levels`` depth intervals; returns the field at every level (levels + 1 rows)."""
    out = [y0]
    y = y0
    dz = Z / levels
    for i in range(levels):
        y = rk4(f, y, i * dz, (i + 1) * dz, steps_per_level)
        out.append(y)
    return np.stack(out)


def controlled_march(f, y0, Z: float, levels: int, rate: float, eps: float, h_rate: float = 0.1,
                     tol: float = 1e-9, max_doublings: int = 4):
    """March with h * rate / eps <= h_rate, doubling the step count until the final field settles."""
    base = max(1, int(math.ceil(rate * (Z / levels) / (eps * h_rate))))
    prev = march(f, y0, Z, levels, base)
    for _ in range(max_doublings):
        base *= 2
        cur = march(f, y0, Z, levels, base)
        scale = max(np.linalg.norm(cur[-1]), 1e-300)
        if np.linalg.norm(cur[-1] - prev[-1]) / scale < tol:
            return cur, base
        prev = cur
    return prev, base


def spectral_filter(eta: np.ndarray, eps: float, tau: float, c_min: float, s_lo: float, s_hi: float) -> np.ndarray:
    """k(eps eta) = 1 - ramp((eps eta)^2/(c_min tau^2); s_lo, s_hi), exactly zero beyond s_hi."""
    r = (eps * eta) ** 2 / (c_min * tau ** 2)
    return 1.0 - ir.ramp_values(r, s_lo, s_hi)
