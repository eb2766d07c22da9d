from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from varlex.grid import DomainBox, GridFunction, sample
from varlex.maximal import RubioConfig, rubio_defrancia
from varlex.probes import test_family
from varlex.weights import (
    DyadicFamily,
    a1_constant,
    a1_implies_apq_check,
    ap_constant,
    apq_constant,
    is_divergent,
    refinement_profile,
)


def test_family_counts_and_depth_limit():
    d = DomainBox.cube(0, 1, 16, 2)
    fam = DyadicFamily(d, 3)
    assert fam.count == 1 + 4 + 16 + 64
    assert sum(1 for _ in fam.cubes()) == fam.count
    with pytest.raises(ValueError, match="divisible"):
        DyadicFamily(d, 5)
    assert fam.cube_box(1, (1, 0)) == ((0.5, 0.0), (1.0, 0.5))


@pytest.mark.parametrize("n", [1, 2])
def test_constant_weight_is_exactly_one(n):
    d = DomainBox.cube(0, 1, 64, n)
    fam = DyadicFamily(d, 6)
    for c in (1.0, 5.0):
        w = GridFunction.constant(d, c)
        for p in (1.5, 2.0, 4.0):
            r = ap_constant(w, p, fam)
            assert r.constant == 1.0 and not r.divergent
            assert all(v == 1.0 for v in r.profile)
        for p, q in ((1.0, 2.0), (2.0, 3.0)):
            assert apq_constant(w, p, q, fam).constant == 1.0
        assert a1_constant(w, fam).constant == 1.0


def test_ap_sqrt_weight_matches_direct_scan():
    d = DomainBox.cube(-1, 1, 64)
    w = sample(d, lambda x: np.sqrt(np.abs(x[..., 0])))
    fam = DyadicFamily(d, 6)
    r = ap_constant(w, 2.0, fam)
    best = 0.0
    v = w.values
    for level in range(7):
        k = 64 >> level
        for i in range(1 << level):
            blk = v[i * k : (i + 1) * k]
            best = max(best, blk.mean() * (1 / blk).mean())
    assert math.isfinite(r.constant)
    assert_allclose(r.constant, best, rtol=1e-12)


def test_zero_weight_gives_infinite_cube():
    d = DomainBox.cube(0, 1, 8)
    v = np.ones(8)
    v[3] = 0.0
    r = ap_constant(GridFunction(d, v), 2.0, DyadicFamily(d, 3))
    assert r.divergent and (3, (3,)) in r.infinite_cubes


def test_a1_rejects_interior_zero():
    d = DomainBox.cube(-1, 1, 16)
    w = sample(d, lambda x: np.where(np.abs(x[..., 0]) < 0.1, 0.0, 1.0))
    with pytest.raises(ValueError, match="w > 0"):
        a1_constant(w, DyadicFamily(d, 4))


def test_a1_of_rubio_weight():
    d = DomainBox.cube(-2, 2, 256)
    rng = np.random.default_rng(3)
    h = GridFunction(d, rng.uniform(0, 1, 256))
    N = 2.0
    r = rubio_defrancia(h, RubioConfig(N, 20))
    rep = a1_constant(r.field, DyadicFamily(d, 8))
    assert rep.constant <= 2 * N + r.a1_tail() + 1e-9


def test_is_divergent_rule():
    assert is_divergent([1.0, 3.0, 10.0])
    assert not is_divergent([1.0, 3.0, 9.0])
    assert not is_divergent([1.0, 20.0, 15.0])
    assert is_divergent([1.0, 2.0, math.inf])
    assert not is_divergent([1.0, 100.0])


def test_abs_weight_grows_with_depth():
    # w = |x|, p = q = 2 on [-2, 2]^n: the dual average over the cubes at 0 grows
    root = DomainBox.cube(-2, 2, 2)
    prof = refinement_profile(
        lambda d: sample(d, lambda x: np.linalg.norm(x, axis=-1)),
        lambda w, fam: apq_constant(w, 2.0, 2.0, fam),
        root,
        [3, 4, 5, 6, 7, 8],
    )
    assert all(b > a for a, b in zip(prof.constants, prof.constants[1:]))


def test_implication_examples():
    d = DomainBox.cube(-1, 1, 64)
    fam = DyadicFamily(d, 6)
    rep = a1_implies_apq_check(GridFunction.constant(d, 1.0), 2.0, 2.0, fam)
    assert rep.a1.constant == 1.0 and rep.apq.constant == 1.0 and rep.passed
    w = sample(d, lambda x: x[..., 0] ** 2)
    rep = a1_implies_apq_check(w, 2.0, 2.0, fam, a1_limit=10.0)
    assert not rep.antecedent and rep.note == "antecedent false" and rep.passed


def test_implication_rubio_weight():
    d = DomainBox.cube(-1.5, 1.5, 64, 2)
    h = test_family(4, 1, [-1, -1], [1, 1])[0].sample(d)
    q0 = 2.4
    w = rubio_defrancia(h, RubioConfig(3.0, 20)).field ** (1 / q0)
    rep = a1_implies_apq_check(w, 1.5, q0, DyadicFamily(d, 6))
    assert rep.antecedent and rep.consequent and rep.passed


def test_report_serialization():
    d = DomainBox.cube(0, 1, 4)
    r = ap_constant(GridFunction.constant(d, 1.0), 2.0, DyadicFamily(d, 2))
    assert r.to_dict() == {"constant": 1.0, "worstCube": {"level": 0, "index": [0]}, "divergent": False}
