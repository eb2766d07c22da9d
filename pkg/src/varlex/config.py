"""Experiment configuration: TOML files turned into library objects.

Every builder takes the parsed table and a :class:`Source` so that a bad
value is reported with the line it came from.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import tomli

from .exponent import ExponentField
from .grid import DomainBox
from .matrices import parse_matrix, validate
from .maximal import MaximalConfig
from .operators import KernelSpec
from .probes import KINDS, TestFunction, test_family

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "build_domain",
    "build_exponent",
    "build_functions",
    "build_kernel",
    "build_matrices",
    "build_maximal",
    "build_tests",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``path:line:``."""


@dataclass(frozen=True)
class Source:
    path: str
    text: str

    def line_of(self, table: str, key: str | None = None) -> int:
        """Line of ``key`` inside ``[table]`` (or of the header), 1-based; 1 if not found."""
        lines = self.text.splitlines()
        start = 0
        if table:
            pat = re.compile(r"^\s*\[+\s*" + re.escape(table) + r"\s*\]+\s*(#.*)?$")
            hits = [i for i, l in enumerate(lines) if pat.match(l)]
            if not hits:
                return 1
            start = hits[0]
            if key is None:
                return start + 1
        if key is None:
            return 1
        kpat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
        for i in range(start + (1 if table else 0), len(lines)):
            if table and i > start and re.match(r"^\s*\[", lines[i]):
                break
            if not table and re.match(r"^\s*\[", lines[i]):
                break
            if kpat.match(lines[i]):
                return i + 1
        return start + 1 if table else 1

    def error(self, table: str, key: str | None, msg: str) -> ConfigError:
        where = f"[{table}]" if table else "top level"
        if key:
            where += f".{key}"
        return ConfigError(f"{self.path}:{self.line_of(table, key)}: {where}: {msg}")


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict[str, Any]
    source: Source
    seed: int = 0
    threads: int = 1
    overrides: dict[str, Any] = field(default_factory=dict)

    def table(self, name: str, required: bool = True) -> dict[str, Any]:
        t = self.data.get(name)
        if t is None:
            if required:
                raise self.source.error("", name, f"missing table [{name}]")
            return {}
        if not isinstance(t, dict):
            raise self.source.error("", name, "must be a table")
        return t

    @property
    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(
    path: str | Path, seed: int | None = None, resolution: int | None = None, threads: int = 1
) -> ExperimentConfig:
    """Parse ``path``; ``seed`` and ``resolution`` override the file and enter the config hash."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{p}:1: cannot read config: {e.strerror}") from None
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError(f"{p}:{m.group(1) if m else 1}: {e}") from None
    data = copy.deepcopy(data)
    src = Source(str(p), text)
    if seed is not None:
        data["seed"] = int(seed)
    if resolution is not None:
        data.setdefault("domain", {})["resolution"] = int(resolution)
    s = data.get("seed", 0)
    if not isinstance(s, int) or not 0 <= s < 2**64:
        raise src.error("", "seed", "seed must be an unsigned 64-bit integer")
    return ExperimentConfig(data, src, int(s), int(threads))


# -- builders ----------------------------------------------------------------


def _floats(src: Source, table: str, key: str, v: Any, n: int | None = None) -> tuple[float, ...]:
    if isinstance(v, (int, float)):
        if n is None:
            return (float(v),)
        return (float(v),) * n
    if isinstance(v, list) and all(isinstance(t, (int, float)) for t in v):
        if n is not None and len(v) != n:
            raise src.error(table, key, f"expected {n} values, got {len(v)}")
        return tuple(float(t) for t in v)
    raise src.error(table, key, f"expected a number or a list of numbers, got {v!r}")


def build_domain(cfg: ExperimentConfig, table: str = "domain") -> DomainBox:
    """``lo``, ``hi`` (numbers or lists), ``resolution`` (int or list), optional ``n``."""
    t = cfg.table(table)
    src = cfg.source
    n = t.get("n")
    for key in ("lo", "hi", "resolution"):
        if key not in t:
            raise src.error(table, None, f"missing key {key!r}")
    if n is None:
        for key in ("lo", "hi", "resolution"):
            if isinstance(t[key], list):
                n = len(t[key])
                break
        else:
            n = 1
    if n not in (1, 2):
        raise src.error(table, "n", f"dimension must be 1 or 2, got {n}")
    lo = _floats(src, table, "lo", t["lo"], n)
    hi = _floats(src, table, "hi", t["hi"], n)
    r = t["resolution"]
    res = (r,) * n if isinstance(r, int) else tuple(r) if isinstance(r, list) else None
    if res is None or not all(isinstance(v, int) for v in res) or len(res) != n:
        raise src.error(table, "resolution", f"expected an integer or {n} integers")
    try:
        return DomainBox(lo, hi, res)
    except ValueError as e:
        raise src.error(table, None, str(e)) from None


def _quadratic(c: float, lin: np.ndarray, sq: np.ndarray, clip: tuple[float, float] | None):
    def ev(x: np.ndarray) -> np.ndarray:
        v = c + np.tensordot(x, lin, axes=([-1], [0])) + np.tensordot(x * x, sq, axes=([-1], [0]))
        return v if clip is None else np.clip(v, clip[0], clip[1])

    return ev


def build_exponent(cfg: ExperimentConfig, table: str = "exponent", domain: DomainBox | None = None) -> ExponentField:
    """Kinds: ``constant`` (value), ``radial`` (a, b, center), ``piecewise``
    (breaks, values, axis), ``quadratic`` (c, linear, square, clip).

    A quadratic without ``clip`` takes its bounds from samples over the
    domain, so ``p_plus`` refers to that box.
    """
    t = cfg.table(table)
    src = cfg.source
    kind = t.get("kind", "constant")
    try:
        if kind == "constant":
            return ExponentField.constant(float(t["value"]))
        if kind == "radial":
            c = t.get("center")
            return ExponentField.radial(float(t["a"]), float(t["b"]), None if c is None else [float(v) for v in c])
        if kind == "piecewise":
            return ExponentField.piecewise(
                [float(v) for v in t["breaks"]], [float(v) for v in t["values"]], int(t.get("axis", 0))
            )
        if kind == "quadratic":
            n = domain.n if domain is not None else len(t.get("linear", t.get("square", [0])))
            lin = np.asarray(_floats(src, table, "linear", t.get("linear", 0.0), n))
            sq = np.asarray(_floats(src, table, "square", t.get("square", 0.0), n))
            clip = t.get("clip")
            label = f"quadratic c={t.get('c', 0.0)} linear={lin.tolist()} square={sq.tolist()}"
            if clip is not None:
                lo, hi = _floats(src, table, "clip", clip, 2)
                ev = _quadratic(float(t.get("c", 0.0)), lin, sq, (lo, hi))
                return ExponentField.expression(ev, lo, hi, label + f" clip={[lo, hi]}")
            if domain is None:
                raise src.error(table, "clip", "an unclipped quadratic needs a domain for its bounds")
            ev = _quadratic(float(t.get("c", 0.0)), lin, sq, None)
            return ExponentField.sampled_expression(ev, domain, label)
    except KeyError as e:
        raise src.error(table, None, f"missing key {e.args[0]!r} for kind {kind!r}") from None
    except ValueError as e:
        raise src.error(table, "kind", str(e)) from None
    raise src.error(table, "kind", f"unknown exponent kind {kind!r}")


def build_matrices(cfg: ExperimentConfig, table: str, n: int) -> list[np.ndarray]:
    """``matrices = [...]`` (each a nested list or a one-key table) or ``powers_of`` with ``N``."""
    t = cfg.table(table)
    src = cfg.source
    try:
        if "powers_of" in t:
            A = parse_matrix(t["powers_of"], n)
            N = int(t.get("N", 0))
            if N < 1:
                raise src.error(table, "N", "powers_of needs N >= 1")
            mats = [np.linalg.matrix_power(A, k) for k in range(N)]
        elif "matrices" in t:
            mats = [parse_matrix(m, n) for m in t["matrices"]]
        else:
            raise src.error(table, None, "give either 'matrices' or 'powers_of'")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise src.error(table, "matrices", str(e)) from None
    for i, m in enumerate(mats, start=1):
        if m.shape != (n, n):
            raise src.error(table, "matrices", f"matrix {i} has shape {m.shape}, expected ({n}, {n})")
    return mats


def build_kernel(cfg: ExperimentConfig, n: int, table: str = "kernel") -> KernelSpec:
    """Matrices as in :func:`build_matrices` plus ``alphas`` or a uniform ``alpha``."""
    t = cfg.table(table)
    src = cfg.source
    mats = build_matrices(cfg, table, n)
    try:
        fam = validate(mats)
        if "alphas" in t:
            return KernelSpec.from_alphas(fam, _floats(src, table, "alphas", t["alphas"]))
        if "alpha" in t:
            return KernelSpec.uniform(fam, float(t["alpha"]))
    except ValueError as e:
        key = "alphas" if "alphas" in t else "alpha" if "alpha" in t else "matrices"
        raise src.error(table, key, str(e)) from None
    raise src.error(table, None, "give either 'alphas' or 'alpha'")


def build_maximal(cfg: ExperimentConfig, table: str = "maximal") -> MaximalConfig:
    t = cfg.table(table, required=False)
    try:
        return MaximalConfig(t.get("max_window"), t.get("shape", "box"))
    except ValueError as e:
        raise cfg.source.error(table, None, str(e)) from None


def build_tests(cfg: ExperimentConfig, n: int, table: str = "tests", p_plus: float = 2.0) -> list[TestFunction]:
    """Seeded family: ``size``, ``support_lo``, ``support_hi``, optional ``kinds``; the seed is the top-level one."""
    t = cfg.table(table)
    src = cfg.source
    size = t.get("size")
    if not isinstance(size, int) or size < 1:
        raise src.error(table, "size", "size must be a positive integer")
    kinds = tuple(t.get("kinds", KINDS))
    for k in kinds:
        if k not in KINDS:
            raise src.error(table, "kinds", f"unknown kind {k!r}")
    lo = _floats(src, table, "support_lo", t.get("support_lo", -0.5), n)
    hi = _floats(src, table, "support_hi", t.get("support_hi", 0.5), n)
    return test_family(cfg.seed, size, lo, hi, p_plus=p_plus, kinds=kinds)


def build_functions(cfg: ExperimentConfig, n: int, key: str = "functions") -> list[TestFunction]:
    """``[[functions]]`` entries: ``indicator`` (lo, hi, amp), ``spike`` (center, radius, beta), ``bump``
    (center, radius, amp) or ``constant`` (value)."""
    items = cfg.data.get(key)
    src = cfg.source
    if not isinstance(items, list) or not items:
        raise src.error("", key, f"need at least one [[{key}]] entry")
    out = []
    for i, it in enumerate(items):
        kind = it.get("kind")
        try:
            if kind == "indicator":
                lo = _floats(src, key, "lo", it["lo"], n)
                hi = _floats(src, key, "hi", it["hi"], n)
                out.append(TestFunction("indicator", {"lo": [list(lo)], "hi": [list(hi)], "amp": [float(it.get("amp", 1.0))]}))
            elif kind == "constant":
                out.append(TestFunction("constant", {"value": float(it["value"])}))
            elif kind == "spike":
                out.append(TestFunction("spike", {"center": list(_floats(src, key, "center", it["center"], n)),
                                                  "radius": float(it["radius"]), "beta": float(it["beta"])}))
            elif kind == "bump":
                out.append(TestFunction("bump", {"center": list(_floats(src, key, "center", it["center"], n)),
                                                 "radius": float(it["radius"]), "amp": float(it.get("amp", 1.0))}))
            else:
                raise src.error(key, "kind", f"entry {i}: unknown function kind {kind!r}")
        except KeyError as e:
            raise src.error(key, None, f"entry {i}: missing key {e.args[0]!r}") from None
    return out


def floats(cfg: ExperimentConfig, table: str, key: str, default: Any = None, n: int | None = None) -> tuple[float, ...]:
    t = cfg.table(table, required=False)
    if key not in t:
        if default is None:
            raise cfg.source.error(table, None, f"missing key {key!r}")
        return _floats(cfg.source, table, key, default, n)
    return _floats(cfg.source, table, key, t[key], n)


def number(cfg: ExperimentConfig, table: str, key: str, default: float | None = None) -> float:
    t = cfg.table(table, required=False)
    v = t.get(key, default)
    if v is None:
        raise cfg.source.error(table, None, f"missing key {key!r}")
    if not isinstance(v, (int, float)):
        raise cfg.source.error(table, key, f"expected a number, got {v!r}")
    return float(v)


def integer(cfg: ExperimentConfig, table: str, key: str, default: int | None = None) -> int:
    t = cfg.table(table, required=False)
    v = t.get(key, default)
    if not isinstance(v, int):
        raise cfg.source.error(table, key if key in t else None, f"expected an integer for {key!r}, got {v!r}")
    return v


def list_of(v: Any) -> Sequence[Any]:
    return v if isinstance(v, list) else [v]
