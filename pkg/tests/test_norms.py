from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from varlex.exponent import ExponentField
from varlex.grid import DomainBox, GridFunction, integrate, sample
from varlex.norms import luxemburg_norm, modular, weak_quasinorm
from varlex.probes import test_family

PLASTIC = 1.324717957244746  # real root of x^3 = x + 1


def _plastic_bisection() -> float:
    lo, hi = 1.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if mid**3 - mid - 1 < 0 else (lo, mid)
    return 0.5 * (lo + hi)


def test_plastic_oracle():
    assert abs(_plastic_bisection() - PLASTIC) < 1e-15


def test_modular_examples():
    d = DomainBox.cube(0.0, 1.0, 64)
    assert_allclose(modular(GridFunction.constant(d, 1.0), ExponentField.radial(1.2, 3.0)).value, 1.0, rtol=1e-14)
    for lam in (0.1, 1.0, 7.0):
        assert modular(GridFunction.zeros(d), 2.0, lam).value == 0.0


def test_modular_piecewise_at_plastic():
    d = DomainBox.cube(-1.0, 1.0, 4096)
    p = ExponentField.piecewise([0.0], [2.0, 3.0])
    m = modular(GridFunction.constant(d, 1.0), p, 1.3247)
    assert_allclose(m.value, 1.3247**-2 + 1.3247**-3, rtol=1e-12)
    assert abs(m.value - 1.0) < 1e-4


def test_modular_overflow_saturates():
    d = DomainBox.cube(0.0, 1.0, 4)
    m = modular(GridFunction.constant(d, 1e200), 5.0)
    assert not m.finite and m.value == np.inf


def test_norm_examples():
    d = DomainBox.cube(0.0, 1.0, 256)
    p = ExponentField.constant(2.0)
    assert_allclose(luxemburg_norm(GridFunction.constant(d, 1.0), p), 1.0, rtol=1e-9)
    assert_allclose(luxemburg_norm(GridFunction.constant(d, 3.0), p), 3.0, rtol=1e-9)
    assert luxemburg_norm(GridFunction.zeros(d), p) == 0.0


def test_norm_plastic():
    d = DomainBox.cube(-1.0, 1.0, 4096)
    p = ExponentField.piecewise([0.0], [2.0, 3.0])
    assert abs(luxemburg_norm(GridFunction.constant(d, 1.0), p) - PLASTIC) < 1e-6


@pytest.mark.parametrize("p0", [1.0, 1.5, 2.0, 3.0])
def test_norm_matches_lp_for_constant_exponent(p0):
    d = DomainBox.cube(0.0, 1.0, 1 << 12)
    for t in test_family(3, 10, [0.1], [0.9]):
        f = t.sample(d)
        ref = integrate(abs(f) ** p0) ** (1 / p0)
        assert_allclose(luxemburg_norm(f, p0), ref, rtol=1e-6)


@given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_norm_homogeneous(c, seed):
    d = DomainBox.cube(-1.0, 1.0, 128)
    p = ExponentField.radial(1.3, 1.0)
    f = test_family(seed, 1, [-0.8], [0.8])[0].sample(d)
    assert_allclose(luxemburg_norm(f * c, p), c * luxemburg_norm(f, p), rtol=1e-6)


@given(seed=st.integers(0, 1000))
def test_norm_triangle_and_monotone(seed):
    d = DomainBox.cube(-1.0, 1.0, 128)
    p = ExponentField.radial(1.3, 1.0)
    f, g = (t.sample(d) for t in test_family(seed, 2, [-0.8], [0.8]))
    nf, ng = luxemburg_norm(f, p), luxemburg_norm(g, p)
    assert luxemburg_norm(f + g, p) <= (nf + ng) * (1 + 1e-6)
    big = GridFunction(d, np.maximum(np.abs(f.values), np.abs(g.values)))
    assert luxemburg_norm(big, p) >= max(nf, ng) * (1 - 1e-6)


def test_weak_quasinorm_examples():
    d = DomainBox.cube(-2.0, 2.0, 400)
    assert weak_quasinorm(GridFunction.zeros(d), 2.0, [0.5, 1.0]) == 0.0
    g = sample(d, lambda x: ((x[..., 0] >= 0) & (x[..., 0] <= 1)).astype(float))
    assert_allclose(weak_quasinorm(g, 2.0, [0.5]), 0.5, rtol=1e-6)
    with pytest.raises(ValueError):
        weak_quasinorm(g, 2.0, [])


@given(seed=st.integers(0, 1000))
def test_weak_below_strong(seed):
    d = DomainBox.cube(-1.0, 1.0, 128)
    q = ExponentField.radial(1.2, 1.5)
    g = abs(test_family(seed, 1, [-0.8], [0.8])[0].sample(d))
    levels = np.geomspace(1e-3, 1.0, 20) * g.max()
    assert weak_quasinorm(g, q, levels) <= luxemburg_norm(g, q)
