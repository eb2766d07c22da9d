from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from varlex.config import (
    ConfigError,
    build_domain,
    build_exponent,
    build_functions,
    build_kernel,
    build_matrices,
    build_tests,
    load_config,
)

BASE = """\
seed = 5

[domain]
lo = [-1.0, -1.0]
hi = [1.0, 1.0]
resolution = 32

[exponent]
kind = "radial"
a = 1.5
b = 0.5

[kernel]
powers_of = {rotation_pi = 0.5}
N = 4
alpha = 0.5

[tests]
size = 3
support_lo = [-0.5, -0.5]
support_hi = [0.5, 0.5]
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_builders(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    d = build_domain(cfg)
    assert d.resolution == (32, 32) and d.lo == (-1.0, -1.0)
    p = build_exponent(cfg, domain=d)
    assert p.p_minus == 1.5
    k = build_kernel(cfg, 2)
    assert k.family.m == 4
    assert_allclose(k.alphas, [0.375] * 4)
    assert len(build_tests(cfg, 2)) == 3


def test_overrides_enter_hash(tmp_path):
    path = write(tmp_path, BASE)
    a = load_config(path)
    b = load_config(path)
    assert a.hash == b.hash and len(a.hash) == 16
    c = load_config(path, seed=6)
    assert c.seed == 6 and c.hash != a.hash
    r = load_config(path, resolution=16)
    assert build_domain(r).resolution == (16, 16) and r.hash != a.hash
    assert load_config(path, threads=8).hash == a.hash


def test_seed_changes_tests(tmp_path):
    path = write(tmp_path, BASE)
    t1 = build_tests(load_config(path), 2)
    t2 = build_tests(load_config(path, seed=99), 2)
    assert t1 != t2
    assert build_tests(load_config(path), 2) == t1


def test_error_is_line_anchored(tmp_path):
    path = write(tmp_path, BASE.replace("resolution = 32", "resolution = 1"))
    with pytest.raises(ConfigError) as e:
        build_domain(load_config(path))
    assert str(e.value).startswith(f"{path}:3: [domain]")


def test_bad_key_line(tmp_path):
    path = write(tmp_path, BASE.replace("size = 3", "size = -3"))
    with pytest.raises(ConfigError) as e:
        build_tests(load_config(path), 2)
    line = BASE.splitlines().index("size = 3") + 1
    assert str(e.value).startswith(f"{path}:{line}: [tests].size")


def test_toml_syntax_error(tmp_path):
    path = write(tmp_path, "seed = 1\n[domain\nlo = 0\n")
    with pytest.raises(ConfigError, match=r":2:"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


def test_exponent_kinds(tmp_path):
    text = BASE.replace('kind = "radial"\na = 1.5\nb = 0.5', 'kind = "quadratic"\nc = 2.0\nsquare = [0.1, 0.0]')
    cfg = load_config(write(tmp_path, text))
    p = build_exponent(cfg, domain=build_domain(cfg))
    assert_allclose(p(np.array([[1.0, 3.0]])), 2.1)
    bad = BASE.replace('kind = "radial"', 'kind = "spline"')
    with pytest.raises(ConfigError, match="unknown exponent kind"):
        build_exponent(load_config(write(tmp_path, bad, "b.toml")))


def test_matrices_forms(tmp_path):
    text = BASE.replace("powers_of = {rotation_pi = 0.5}\nN = 4", "matrices = [[[1.0, 0.0], [0.0, 1.0]], {scale = -1.0}]")
    mats = build_matrices(load_config(write(tmp_path, text)), "kernel", 2)
    assert_allclose(mats[1], -np.eye(2))
    dup = BASE.replace("powers_of = {rotation_pi = 0.5}\nN = 4", "matrices = [{identity = 2}, {identity = 2}]")
    with pytest.raises(ConfigError, match=r"\[kernel\]"):
        build_kernel(load_config(write(tmp_path, dup, "d.toml")), 2)


def test_functions(tmp_path):
    text = """
[[functions]]
kind = "indicator"
lo = 0.0
hi = 1.0

[[functions]]
kind = "constant"
value = 2.0
"""
    fs = build_functions(load_config(write(tmp_path, text)), 1)
    assert [f.kind for f in fs] == ["indicator", "constant"]
    with pytest.raises(ConfigError, match="functions"):
        build_functions(load_config(write(tmp_path, "seed = 1\n", "e.toml")), 1)


def test_seed_range(tmp_path):
    with pytest.raises(ConfigError, match="unsigned 64-bit"):
        load_config(write(tmp_path, "seed = -1\n"))
