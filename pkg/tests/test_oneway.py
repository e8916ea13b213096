import math

import numpy as np
import pytest

from psifactor import symbol_ir as ir
from psifactor.experiments import ladder_from, oneway_run
from psifactor.harness import ExperimentConfig
from psifactor.oneway import DemoError, XOperator, controlled_march, march, rk4, spectral_filter


def test_rk4_fourth_order():
    f = lambda z, y: 1j * y
    errs = []
    for steps in (10, 20, 40):
        errs.append(abs(rk4(f, np.array([1.0 + 0j]), 0.0, 1.0, steps)[0] - np.exp(1j)))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.1)


def test_march_levels_and_control():
    f = lambda z, y: -2.0 * y
    traj = march(f, np.array([1.0]), 1.0, 4, 10)
    assert traj.shape == (5, 1)
    out, steps = controlled_march(f, np.array([1.0]), 1.0, 4, 2.0, 0.1, tol=1e-10)
    assert out[-1][0] == pytest.approx(math.exp(-2.0), rel=1e-9)
    assert steps >= 1


def test_xoperator_matches_multiplier():
    n = 64
    x = np.arange(n) * 2 * np.pi / n
    eta = np.fft.fftfreq(n, 1.0 / n)
    eps = 0.1
    op = XOperator(ir.parse_symbol("tau^2 - xi1^2", dims=2), x, eta, 0.5, eps, 1.0)
    u = np.exp(3j * x)
    assert np.allclose(op(u, 0.0), (0.25 - (eps * 3) ** 2) * u)
    zop = XOperator(ir.parse_symbol("(2 + sin(y1 + y2))*tau^2", dims=2), x, eta, 0.5, eps, 1.0)
    assert np.allclose(zop(u, 0.4, mode_tol=1e-12), (2 + np.sin(x + 0.4)) * 0.25 * u)


def test_spectral_filter_profile():
    eta = np.array([0.0, 1.0, 10.0])
    k = spectral_filter(eta, 0.1, 1.0, 1.0, 0.1, 0.5)
    assert k[0] == 1 and k[1] == 1 and k[2] == 0


def small_cfg():
    return ExperimentConfig(demo_nx=64, demo_nz=16, demo_order=2)


def test_constant_speed_is_exact():
    cfg = small_cfg()
    out = oneway_run(cfg, "2.0", 2, ladder_from(2.0 ** -3, 2.0 ** -5))
    assert max(out.rel_diff) <= 1e-8


def test_refuses_packet_outside_cone():
    cfg = small_cfg()
    with pytest.raises(DemoError, match="outside"):
        oneway_run(cfg, cfg.demo_c, 1, ladder_from(2.0 ** -3, 2.0 ** -5), xi0=0.45)


def test_refuses_unresolvable_packet():
    cfg = small_cfg()
    with pytest.raises(DemoError, match="resolve"):
        oneway_run(cfg, "2.0", 1, ladder_from(2.0 ** -8, 2.0 ** -10))
