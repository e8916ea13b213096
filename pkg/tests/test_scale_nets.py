import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psifactor import scale_nets as sn
from psifactor.symbol_ir import SampledCoefficient


def test_omega_examples():
    assert sn.omega_of(math.exp(-4)) == pytest.approx(5.0)
    assert sn.omega_of(math.exp(-4), r=2) == pytest.approx(math.sqrt(5.0))
    with pytest.raises(sn.LadderError):
        sn.make_ladder([0.9], C=0.5)


def test_default_ladder_shape():
    lad = sn.default_ladder()
    assert len(lad) == 10
    assert lad.eps[0] == 2.0 ** -3 and lad.eps[-1] == 2.0 ** -12
    assert all(w == pytest.approx(math.log(math.e / e)) for e, w in lad)


def coefficient(f, n=64):
    return SampledCoefficient.from_function("c", ("y1",), f, n)


def test_regularize_constant_is_exact():
    lad = sn.default_ladder()
    fam = sn.regularize_coefficient(coefficient(lambda y: np.ones_like(y)), lad)
    for v in fam.values.values():
        assert np.allclose(v, 1.0, atol=1e-12)


def test_regularize_sine_converges_and_is_bounded():
    lad = sn.default_ladder()
    raw = coefficient(np.sin)
    fam = sn.regularize_coefficient(raw, lad)
    errs = [np.max(np.abs(fam.values[e] - raw.samples)) for e in lad.eps]
    assert all(a >= b - 1e-15 for a, b in zip(errs, errs[1:]))
    assert all(np.max(np.abs(fam.values[e])) <= 1 + 1e-12 for e in lad.eps)


def test_strictly_nonzero_examples():
    lad = sn.default_ladder()
    assert sn.check_strictly_nonzero(sn.regularize_coefficient(coefficient(lambda y: 4 + 0 * y), lad), lad) == (True, pytest.approx(4.0))
    ok, m = sn.check_strictly_nonzero(sn.regularize_coefficient(coefficient(np.sin), lad), lad)
    assert not ok and m == pytest.approx(0.0, abs=1e-12)
    ok, m = sn.check_strictly_nonzero(sn.regularize_coefficient(coefficient(lambda y: 2 + 0.5 * np.sin(y)), lad), lad)
    assert ok and m == pytest.approx(1.5, abs=1e-3)


def test_seminorm_estimates():
    lad = sn.default_ladder()
    spec = sn.SampleSpec(count=500)
    v = sn.seminorm_estimate(sn.net("tau^2 - xi1^2", order=2), {}, {}, lad, spec)
    assert np.allclose(v, v[0]) and v[0] == pytest.approx(1.0, abs=1e-3)
    v = sn.seminorm_estimate(sn.net("eps^-1*tau", order=1), {}, {}, lad, spec)
    assert np.allclose(v * np.asarray(lad.eps), v[0] * lad.eps[0])
    v = sn.seminorm_estimate(sn.net("omega*tau", order=1, l=1), {}, {}, lad, spec)
    assert np.allclose(v / np.asarray(lad.omega), v[0] / lad.omega[0])


def test_classify_examples():
    lad = sn.default_ladder()
    fit = sn.classify_growth(np.asarray(lad.eps) ** 2, lad)
    assert fit.k == pytest.approx(2.0, abs=1e-8) and fit.l == pytest.approx(0.0, abs=1e-8)
    fit = sn.classify_growth(sn.planted_values(lad, -1, 3), lad)
    assert fit.k == pytest.approx(-1, abs=0.1) and fit.l == pytest.approx(3, abs=0.1)
    fit = sn.classify_growth(np.ones(len(lad)), lad)
    assert fit.k == pytest.approx(0, abs=1e-8) and fit.l == pytest.approx(0, abs=1e-8)


def test_classify_exact_zero():
    lad = sn.default_ladder()
    fit = sn.classify_growth(np.zeros(len(lad)), lad, zero_floor=1e-14)
    assert fit.exact_zero and fit.passes(6)


@settings(max_examples=25, deadline=None)
@given(st.integers(-2, 2), st.integers(0, 3), st.floats(0.1, 10))
def test_planted_recovery(k, l, C):
    lad = sn.default_ladder()
    fit = sn.classify_growth(sn.planted_values(lad, k, l, C), lad)
    assert abs(fit.k - k) <= 0.25 and abs(fit.l - l) <= 0.25


def test_sample_spec_is_deterministic():
    a = sn.SampleSpec(count=200, seed=3).points()
    b = sn.SampleSpec(count=200, seed=3).points()
    assert set(a) == set(b)
    for k in a:
        assert np.array_equal(a[k], b[k])


def test_japanese_bracket():
    pts = {"tau": np.array([3.0]), "xi1": np.array([4.0])}
    assert sn.japanese(pts, ("tau", "xi1"))[0] == pytest.approx(math.sqrt(26.0))
