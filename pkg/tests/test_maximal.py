from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from varlex.exponent import ExponentField
from varlex.grid import DomainBox, GridFunction, sample
from varlex.maximal import (
    MaximalConfig,
    RubioConfig,
    estimate_maximal_norm,
    frac_maximal,
    hl_maximal,
    hl_maximal_bruteforce,
    iterate_maximal,
    rubio_defrancia,
)
from varlex.norms import luxemburg_norm
from varlex.probes import test_family


def chi01(d: DomainBox) -> GridFunction:
    return sample(d, lambda x: ((x[..., 0] >= 0) & (x[..., 0] <= 1)).astype(float))


def test_constant_maps_to_abs():
    d = DomainBox.cube(-1, 1, 64)
    assert_allclose(hl_maximal(GridFunction.constant(d, -3.0)).values, 3.0, rtol=1e-14)
    d2 = DomainBox.cube(-1, 1, 24, 2)
    for shape in ("box", "ball"):
        assert_allclose(hl_maximal(GridFunction.constant(d2, 2.0), MaximalConfig(shape=shape)).values, 2.0, rtol=1e-12)


def test_indicator_closed_form():
    d = DomainBox.cube(-4.0, 4.0, 1 << 12)
    mf = hl_maximal(chi01(d))
    h = d.h[0]
    assert abs(mf.at([2.0]) - 0.5) <= 2 * h
    xs = np.linspace(1.1, 3.9, 20)
    for x in xs:
        k = d.nearest_index([x])
        xm = d.axes()[0][k[0]]
        assert abs(mf.values[k] - 1.0 / xm) <= 2 * h / xm**2 + 1e-12


def test_dominates_abs():
    d = DomainBox.cube(-1, 1, 32, 2)
    f = test_family(5, 1, [-0.8, -0.8], [0.8, 0.8])[0].sample(d)
    assert np.all(hl_maximal(f).values >= np.abs(f.values))


@pytest.mark.parametrize("n, res", [(1, 64), (1, 512), (2, 12), (2, 20)])
def test_bruteforce_agrees_exactly(n, res):
    # values on a 2^-12 lattice: every window sum is exact in float64, so the
    # prefix-table differences and the direct slice sums are the same numbers
    d = DomainBox.cube(-1.0, 1.0, res, n)
    rng = np.random.default_rng(res)
    f = GridFunction(d, rng.integers(-4096, 4097, d.shape) / 4096.0)
    for cfg in (MaximalConfig(), MaximalConfig(max_window=5)):
        assert_array_equal(hl_maximal(f, cfg).values, hl_maximal_bruteforce(f, cfg).values)
        assert_array_equal(frac_maximal(f, 0.5, cfg).values, hl_maximal_bruteforce(f, cfg, 0.5).values)


@pytest.mark.parametrize("n, res", [(1, 256), (2, 16)])
def test_bruteforce_agrees_to_rounding_on_general_data(n, res):
    d = DomainBox.cube(-1.0, 1.0, res, n)
    f = GridFunction(d, np.random.default_rng(res).uniform(-1, 1, d.shape))
    assert_allclose(hl_maximal(f).values, hl_maximal_bruteforce(f).values, rtol=1e-13, atol=0)


def test_fractional_examples():
    d = DomainBox.cube(-4.0, 4.0, 1024)
    f = chi01(d)
    assert_array_equal(frac_maximal(f, 0.0).values, hl_maximal(f).values)
    assert abs(frac_maximal(f, 0.5).at([0.5]) - 1.0) <= 2 * d.h[0]
    assert np.all(frac_maximal(GridFunction.zeros(d), 0.5).values == 0.0)
    with pytest.raises(ValueError):
        frac_maximal(f, 1.0)


def test_ball_windows_rotation_invariant():
    d = DomainBox.cube(-1.0, 1.0, 32, 2)
    f = test_family(2, 1, [-0.7, -0.7], [0.7, 0.7], kinds=("indicator",))[0].sample(d)
    rot = GridFunction(d, np.rot90(f.values))
    m = MaximalConfig(shape="ball")
    assert_allclose(hl_maximal(rot, m).values, np.rot90(hl_maximal(f, m).values), rtol=1e-12)


def test_iterates_nondecreasing():
    d = DomainBox.cube(-2, 2, 128)
    h = test_family(1, 1, [-1], [1])[0].sample(d)
    its = iterate_maximal(h, 4)
    for a, b in zip(its, its[1:]):
        assert np.all(b.values >= a.values - 1e-15)


def test_rubio_of_one():
    d = DomainBox.cube(-1, 1, 64)
    N, K = 3.0, 12
    r = rubio_defrancia(GridFunction.constant(d, 1.0), RubioConfig(N, K))
    assert_allclose(r.field.values, sum((2 * N) ** -k for k in range(K + 1)), rtol=1e-14)


@given(seed=st.integers(0, 10_000))
def test_rubio_properties_1d(seed):
    d = DomainBox.cube(-2.0, 2.0, 128)
    rng = np.random.default_rng(seed)
    h = GridFunction(d, rng.uniform(0, 1, d.shape) * (rng.uniform(size=d.shape) < 0.3))
    N = 2.5
    r = rubio_defrancia(h, RubioConfig(N, 15))
    assert np.all(h.values <= r.field.values)
    mr = hl_maximal_bruteforce(r.field).values
    bound = 2 * N * r.field.values + r.next_iterate.values / (2 * N) ** 15
    assert np.all(mr <= bound * (1 + 1e-12))
    pos = r.field.values > 0
    assert np.max(mr[pos] / r.field.values[pos]) <= 2 * N + r.a1_tail() + 1e-9


def test_rubio_config_validation():
    with pytest.raises(ValueError):
        RubioConfig(0.5)
    with pytest.raises(ValueError):
        RubioConfig(2.0, 0)


def test_estimate_maximal_norm_examples():
    d = DomainBox.cube(-8.0, 8.0, 512)
    q = ExponentField.constant(2.0)
    assert estimate_maximal_norm(q, 4, d) >= 2.0
    assert_allclose(estimate_maximal_norm(q, 1, d, family=[GridFunction.constant(d, 1.0)]), 2.0, rtol=1e-9)
    f = chi01(d)
    ratio = luxemburg_norm(hl_maximal(f), q) / luxemburg_norm(f, q)
    assert_allclose(estimate_maximal_norm(q, 1, d, family=[f]), 2 * ratio, rtol=1e-12)
