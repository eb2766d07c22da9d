from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from varlex.exponent import (
    ExponentField,
    check_log_holder,
    check_matrix_invariance,
    conjugate,
    sobolev_exponent,
)
from varlex.grid import DomainBox
from varlex.matrices import rotation


def test_field_bounds_validated():
    with pytest.raises(ValueError):
        ExponentField.constant(0.5)
    with pytest.raises(ValueError):
        ExponentField.piecewise([0.0], [2.0])


def test_radial_profile():
    p = ExponentField.radial(1.5, 0.5)
    assert_allclose(p(np.array([[0.0, 0.0], [3.0, 4.0]])), [2.0, 1.5 + 0.5 / 6.0])
    assert p.p_minus == 1.5 and p.p_plus == 2.0


def test_piecewise_values():
    p = ExponentField.piecewise([0.0], [2.0, 3.0])
    assert_allclose(p(np.array([[-0.5], [0.25]])), [2.0, 3.0])


@pytest.mark.parametrize("p0, q", [(4 / 3, 4.0), (1.5, 6.0)])
def test_sobolev_constant_examples(p0, q):
    d = sobolev_exponent(ExponentField.constant(p0), 0.5, 1)
    assert_allclose(d.q(np.array([[0.3]])), q, rtol=1e-12)
    assert_allclose(d.q0, q, rtol=1e-12)


def test_sobolev_alpha_zero_is_identity():
    p = ExponentField.radial(1.5, 0.5)
    d = sobolev_exponent(p, 0.0, 2)
    x = np.random.default_rng(0).uniform(-3, 3, (50, 2))
    assert_allclose(d.q(x), p(x))
    assert d.q0 == p.p_minus


def test_sobolev_relation_and_tilde():
    p = ExponentField.radial(1.5, 0.5)
    alpha, n = 0.5, 2
    d = sobolev_exponent(p, alpha, n)
    x = np.random.default_rng(1).uniform(-3, 3, (200, 2))
    assert_allclose(1 / p(x) - 1 / d.q(x), alpha / n, atol=1e-12)
    assert_allclose(d.q0, n * 1.5 / (n - alpha * 1.5), rtol=1e-14)
    assert np.all(d.q_tilde(x) >= 1.0)


def test_sobolev_undefined():
    with pytest.raises(ValueError, match="Sobolev exponent undefined"):
        sobolev_exponent(ExponentField.constant(2.0), 0.5, 1)


def test_sobolev_conjugate_on_domain():
    p = ExponentField.radial(1.5, 0.5)
    box = DomainBox.cube(-1.0, 1.0, 32, 2)
    d = sobolev_exponent(p, 0.5, 2, box)
    assert d.q_tilde_conj is not None
    x = box.points()
    assert_allclose(1 / d.q_tilde(x) + 1 / d.q_tilde_conj(x), 1.0, atol=1e-12)
    assert sobolev_exponent(ExponentField.constant(1.5), 0.5, 2).q_tilde_conj is None


def test_conjugate_examples():
    assert_allclose(conjugate(ExponentField.constant(2.0))(np.zeros((1, 1))), 2.0)
    assert_allclose(conjugate(ExponentField.constant(4.0))(np.zeros((1, 1))), 4.0 / 3.0)


@given(a=st.floats(1.05, 3.0), b=st.floats(0.0, 2.0))
def test_conjugate_is_an_involution(a, b):
    p = ExponentField.radial(a, b)
    x = np.linspace(-5, 5, 41)[:, None]
    assert_allclose(conjugate(conjugate(p))(x), p(x), rtol=1e-12)


def test_log_holder_constant_is_zero():
    r = check_log_holder(ExponentField.constant(2.0), DomainBox.cube(-5, 5, 8), 500)
    assert r.c_local == 0.0 and r.c_infinity == 0.0


def test_log_holder_decaying_profile_finite():
    def ev(x):
        return 2.0 + np.minimum(1.0, 1.0 / np.log(np.e + np.linalg.norm(x, axis=-1)))

    p = ExponentField.expression(ev, 2.0, 3.0, "2 + min(1, 1/log(e+|x|))")
    r = check_log_holder(p, DomainBox.cube(-50, 50, 8), 2000)
    assert math.isfinite(r.c_infinity) and math.isfinite(r.c_local)
    assert r.c_infinity <= 1.0 + 1e-12


def test_log_holder_jump_grows():
    p = ExponentField.piecewise([0.0], [2.0, 3.0])
    d = DomainBox.cube(-1, 1, 8)
    cs = []
    for eps in (1e-2, 1e-4, 1e-8):
        x = np.array([[-eps / 2]])
        y = np.array([[eps / 2]])
        cs.append(check_log_holder(p, d, 1, pairs=(x, y)).c_local)
    assert cs[0] < cs[1] < cs[2]
    assert_allclose(cs[2], -math.log(1e-8), rtol=1e-12)


def test_invariance_examples():
    box = DomainBox.cube(-1.0, 1.0, 32, 2)
    radial = ExponentField.radial(1.5, 0.5)
    assert check_matrix_invariance(radial, rotation(np.pi / 2), box).max_deviation == 0.0
    lin = ExponentField.expression(lambda x: 2 + x[..., 0] / 10, 1.9, 2.1, "2 + x1/10")
    assert check_matrix_invariance(lin, np.eye(2), box).max_deviation == 0.0
    r = check_matrix_invariance(lin, rotation(np.pi / 2), box)
    # p(Ax) - p(x) = (-x2 - x1)/10, largest at the corner midpoints
    x = box.points()
    assert_allclose(r.max_deviation, np.max(np.abs(x[:, 0] + x[:, 1])) / 10, rtol=1e-12)
    assert_allclose(r.max_deviation, 0.2 * (1 - 1 / 32), rtol=1e-12)
    assert not r.passed
