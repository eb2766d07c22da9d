from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from varlex.grid import DomainBox, GridFunction, sample
from varlex.matrices import compose, diag, lemma8_check, parse_matrix, reflection, rotation, spectral_norm, validate
from varlex.maximal import MaximalConfig
from varlex.probes import test_family


def test_validate_examples():
    fam = validate([np.eye(2), 2 * np.eye(2)])
    assert fam.m == 2
    with pytest.raises(ValueError):
        validate([np.eye(2), np.eye(2)])
    validate([np.eye(2), -np.eye(2), rotation(np.pi / 2)])


def test_validate_rejects_singular():
    with pytest.raises(ValueError):
        validate([np.array([[1.0, 0.0], [0.0, 0.0]])])


def test_rotation_snaps_exact_entries():
    assert_array_equal(rotation(np.pi / 2), [[0.0, -1.0], [1.0, 0.0]])
    assert_array_equal(np.linalg.matrix_power(rotation(np.pi / 2), 4), np.eye(2))


@given(t=st.floats(-10, 10), a=st.floats(0.1, 5), ratio=st.floats(0.05, 0.9))
def test_spectral_norm_separated(t, a, ratio):
    A = rotation(t) @ diag(a, a * ratio)
    assert_allclose(spectral_norm(A), a, rtol=1e-12)


@given(t=st.floats(-10, 10), a=st.floats(0.1, 5), b=st.floats(0.1, 5))
def test_spectral_norm_close_singular_values(t, a, b):
    # slow power-iteration convergence: never above the true norm, close to it
    A = rotation(t) @ diag(a, b)
    s = spectral_norm(A)
    assert s <= max(a, b) * (1 + 1e-12)
    assert_allclose(s, max(a, b), rtol=1e-6)


def test_parse_matrix_forms():
    assert_allclose(parse_matrix({"rotation_pi": 0.5}), rotation(np.pi / 2))
    assert_allclose(parse_matrix({"diag": [2, 0.5]}), diag(2, 0.5))
    assert_allclose(parse_matrix({"scale": -1}, 2), -np.eye(2))
    assert_allclose(parse_matrix({"reflection": 0}), reflection(0))
    assert_allclose(parse_matrix(2.0), [[2.0]])
    with pytest.raises(ValueError):
        parse_matrix([[1, 2, 3], [4, 5, 6]])
    with pytest.raises(ValueError):
        parse_matrix({"shear": 1})


def test_compose_identity_and_symmetry():
    d = DomainBox.cube(-1, 1, 40, 2)
    f = sample(d, lambda x: np.exp(-4 * np.sum(x * x, axis=-1)))
    assert_allclose(compose(f, np.eye(2)).values, f.values, rtol=1e-14)
    A = rotation(0.7)
    inside = d.contains(d.mesh() @ A.T)  # outside the box the composition is zero-filled
    assert_allclose(compose(f, A).values[inside], f.values[inside], atol=5e-3)


def test_compose_dilation_1d():
    d = DomainBox.cube(-1, 2, 300)
    f = sample(d, lambda x: ((x[..., 0] >= 0) & (x[..., 0] <= 1)).astype(float))
    g = compose(f, np.array([[2.0]]))
    ref = sample(d, lambda x: ((x[..., 0] >= 0) & (x[..., 0] <= 0.5)).astype(float))
    assert np.sum(np.abs(g.values - ref.values) > 1e-12) <= 2


def test_lemma8_identity_and_radial():
    d = DomainBox.cube(-1.5, 1.5, 48, 2)
    f = test_family(0, 1, [-1, -1], [1, 1])[0].sample(d)
    r = lemma8_check(f, np.eye(2))
    assert r.c_theory == 1.0 and r.c_empirical <= 1 + r.grid_slack and r.passed
    g = sample(d, lambda x: np.exp(-3 * np.sum(x * x, axis=-1)))
    r = lemma8_check(g, rotation(np.pi / 5))
    assert r.c_theory == pytest.approx(1.0, rel=1e-12)
    assert abs(r.c_empirical - 1.0) <= r.grid_slack


def test_lemma8_dilation_1d():
    d = DomainBox.cube(-2.0, 2.0, 512)
    f = sample(d, lambda x: ((x[..., 0] >= 0) & (x[..., 0] <= 1)).astype(float))
    r = lemma8_check(f, np.array([[2.0]]), MaximalConfig())
    assert r.c_theory == 1.0
    assert r.c_empirical <= 1 + r.grid_slack


def test_lemma8_singular_rejected():
    d = DomainBox.cube(-1, 1, 16, 2)
    with pytest.raises(ValueError):
        lemma8_check(GridFunction.constant(d, 1.0), np.zeros((2, 2)))
