"""Muckenhoupt constants A_p, A_1 and A(p,q) over finite dyadic cube families.

Every estimate is a supremum over finitely many cubes, hence a lower bound
for the true constant.  Infinite constants show up either as a cube whose
dual integral is infinite (the weight vanishes there) or as growth of the
estimate along a depth profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .grid import DomainBox, GridFunction
from .maximal import MaximalConfig, hl_maximal

__all__ = [
    "DIVERGENCE_FACTOR",
    "DepthProfile",
    "DyadicFamily",
    "ImplicationReport",
    "WeightReport",
    "a1_constant",
    "a1_implies_apq_check",
    "ap_constant",
    "apq_constant",
    "is_divergent",
    "refinement_profile",
]

DIVERGENCE_FACTOR = 10.0
JENSEN_TOL = 1e-9


@dataclass(frozen=True)
class DyadicFamily:
    """All dyadic subcubes of ``root`` down to level ``depth``.

    Level ``l`` splits each axis into ``2**l`` equal parts; a cube id is
    ``(level, index)`` with one integer index per axis.  The grid
    resolution must be divisible by ``2**depth`` so that every cube is an
    exact union of cells.
    """

    root: DomainBox
    depth: int

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        for r in self.root.resolution:
            if r % (1 << self.depth):
                raise ValueError(
                    f"resolution {r} is not divisible by 2^{self.depth}; "
                    f"depth is limited to log2 of the resolution"
                )

    @property
    def count(self) -> int:
        n = self.root.n
        return sum(1 << (n * l) for l in range(self.depth + 1))

    def cells_per_side(self, level: int) -> tuple[int, ...]:
        return tuple(r >> level for r in self.root.resolution)

    def cubes(self) -> Iterator[tuple[int, tuple[int, ...], tuple[slice, ...]]]:
        """Yield ``(level, index, slices)`` in level-major, row-major order."""
        for level in range(self.depth + 1):
            k = self.cells_per_side(level)
            for idx in np.ndindex(*([1 << level] * self.root.n)):
                yield level, tuple(int(i) for i in idx), tuple(
                    slice(i * s, (i + 1) * s) for i, s in zip(idx, k)
                )

    def cube_box(self, level: int, index: Sequence[int]) -> tuple[tuple[float, ...], tuple[float, ...]]:
        lo = np.asarray(self.root.lo, dtype=float)
        side = (np.asarray(self.root.hi, dtype=float) - lo) / (1 << level)
        a = lo + side * np.asarray(index)
        return tuple(a.tolist()), tuple((a + side).tolist())

    def block_reduce(self, values: np.ndarray, level: int, how: str = "mean") -> np.ndarray:
        """Per-cube mean (or max) of ``values`` at one level, shaped ``(2**level,) * n``."""
        k = self.cells_per_side(level)
        m = 1 << level
        if self.root.n == 1:
            blocks = values.reshape(m, k[0])
            axes: tuple[int, ...] = (1,)
        else:
            blocks = values.reshape(m, k[0], m, k[1])
            axes = (1, 3)
        if how == "mean":
            return blocks.sum(axis=axes) / float(np.prod(k))
        if how == "max":
            return blocks.max(axis=axes)
        raise ValueError(f"unknown reduction {how!r}")


@dataclass(frozen=True)
class WeightReport:
    """``constant`` is the sup over finite cubes; ``profile[l]`` is the sup over levels ``<= l``.

    ``infinite_cubes`` lists cubes whose dual integral is infinite (the
    weight vanishes at a midpoint); any such cube makes the report divergent.
    """

    constant: float
    worst_cube: tuple[int, tuple[int, ...]]
    divergent: bool
    profile: tuple[float, ...] = ()
    infinite_cubes: tuple[tuple[int, tuple[int, ...]], ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        level, index = self.worst_cube
        return {
            "constant": self.constant,
            "worstCube": {"level": level, "index": list(index)},
            "divergent": self.divergent,
        }


def is_divergent(profile: Sequence[float], factor: float = DIVERGENCE_FACTOR) -> bool:
    """Monotone growth by at least ``factor`` across the last two depth increments."""
    if len(profile) < 3:
        return False
    a, b, c = profile[-3:]
    if not math.isfinite(c):
        return True
    return a <= b <= c and c >= factor * a


def _check_weight(w: GridFunction) -> np.ndarray:
    v = w.values
    if np.any(v < 0):
        raise ValueError("weight must be nonnegative")
    if not np.any(v > 0):
        raise ValueError("weight vanishes identically on the root cube")
    # the estimators below are scale invariant; normalising keeps powers in range
    return v / v.max()


def _scan(
    fam: DyadicFamily, per_level: Callable[[int], np.ndarray]
) -> WeightReport:
    best = -math.inf
    worst: tuple[int, tuple[int, ...]] = (0, (0,) * fam.root.n)
    profile = []
    infinite = []
    for level in range(fam.depth + 1):
        vals = per_level(level)
        bad = ~np.isfinite(vals)
        for idx in zip(*np.nonzero(bad)):
            infinite.append((level, tuple(int(i) for i in idx)))
        finite = np.where(bad, -math.inf, vals)
        k = int(np.argmax(finite))
        if finite.flat[k] > best:
            best = float(finite.flat[k])
            worst = (level, tuple(int(i) for i in np.unravel_index(k, vals.shape)))
        profile.append(best)
    if best == -math.inf:
        best = math.inf
    return WeightReport(
        constant=best,
        worst_cube=worst,
        divergent=bool(infinite) or is_divergent(profile),
        profile=tuple(profile),
        infinite_cubes=tuple(infinite),
    )


def ap_constant(w: GridFunction, p: float, fam: DyadicFamily) -> WeightReport:
    """``max_Q (avg_Q w) (avg_Q w^(-1/(p-1)))^(p-1)`` over the family."""
    if not p > 1:
        raise ValueError(f"A_p needs p > 1, got {p}")
    _same_grid(w, fam)
    v = _check_weight(w)
    with np.errstate(divide="ignore"):
        dual = np.where(v > 0, v ** (-1.0 / (p - 1.0)), np.inf)

    def level(l: int) -> np.ndarray:
        with np.errstate(invalid="ignore"):  # 0 * inf on a cube where w vanishes
            return fam.block_reduce(v, l) * fam.block_reduce(dual, l) ** (p - 1.0)

    return _scan(fam, level)


def apq_constant(w: GridFunction, p: float, q: float, fam: DyadicFamily) -> WeightReport:
    """Two-exponent constant of ``w``.

    For ``p > 1``: ``max_Q (avg_Q w^q)^(1/q) (avg_Q w^(-p'))^(1/p')``.
    For ``p = 1``: ``max_Q ||1/w||_{L^inf(Q)} (avg_Q w^q)^(1/q)``, the sup
    norm taken over the midpoints of ``Q``.
    """
    if not p >= 1:
        raise ValueError(f"A(p,q) needs p >= 1, got {p}")
    if not q > 1:
        raise ValueError(f"A(p,q) needs q > 1, got {q}")
    _same_grid(w, fam)
    v = _check_weight(w)
    wq = v**q
    with np.errstate(divide="ignore"):
        if p == 1:
            dual = np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), np.inf)

            def level(l: int) -> np.ndarray:
                return fam.block_reduce(dual, l, "max") * fam.block_reduce(wq, l) ** (1.0 / q)

        else:
            pc = p / (p - 1.0)
            dual = np.where(v > 0, np.where(v > 0, v, 1.0) ** (-pc), np.inf)

            def level(l: int) -> np.ndarray:
                return fam.block_reduce(wq, l) ** (1.0 / q) * fam.block_reduce(dual, l) ** (1.0 / pc)

    return _scan(fam, level)


def a1_constant(
    w: GridFunction, fam: DyadicFamily, m: MaximalConfig = MaximalConfig()
) -> WeightReport:
    """``max_x Mw(x) / w(x)`` over midpoints; the worst cube is the finest one holding the argmax."""
    _same_grid(w, fam)
    v = w.values
    if np.any(v <= 0):
        k = np.unravel_index(int(np.argmin(v)), v.shape)
        x = w.domain.mesh()[k]
        raise ValueError(f"A_1 needs w > 0 at every midpoint; w({x.tolist()}) = {float(v[k])}")
    ratio = hl_maximal(w, m).values / v
    k = np.unravel_index(int(np.argmax(ratio)), v.shape)
    cell = fam.cells_per_side(fam.depth)
    index = tuple(int(i) // c for i, c in zip(k, cell))
    c = float(ratio[k])
    return WeightReport(c, (fam.depth, index), False, (c,))


@dataclass(frozen=True)
class ImplicationReport:
    a1: WeightReport
    apq: WeightReport
    antecedent: bool
    consequent: bool
    passed: bool
    note: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "a1": self.a1.to_dict(),
            "apq": self.apq.to_dict(),
            "antecedent": self.antecedent,
            "consequent": self.consequent,
            "pass": self.passed,
            "note": self.note,
        }


def a1_implies_apq_check(
    w: GridFunction,
    p: float,
    q: float,
    fam: DyadicFamily,
    m: MaximalConfig = MaximalConfig(),
    a1_limit: float | None = None,
) -> ImplicationReport:
    """If ``w`` passes A_1 then its A(p,q) estimate must be finite and not divergent.

    A_1 passes when its constant is finite and, if ``a1_limit`` is given,
    at most ``a1_limit``.  A failed antecedent makes the check vacuous.
    """
    a1 = a1_constant(w, fam, m)
    apq = apq_constant(w, p, q, fam)
    antecedent = math.isfinite(a1.constant) and not a1.divergent
    if a1_limit is not None:
        antecedent = antecedent and a1.constant <= a1_limit
    consequent = math.isfinite(apq.constant) and not apq.divergent
    if not antecedent:
        note = "antecedent false"
    elif consequent:
        note = "A_1 holds and A(p,q) is finite"
    else:
        note = "A_1 holds but A(p,q) diverges"
    return ImplicationReport(a1, apq, antecedent, consequent, (not antecedent) or consequent, note)


@dataclass(frozen=True)
class DepthProfile:
    """Constants of a closed-form weight sampled at resolution ``2**depth`` per axis."""

    depths: tuple[int, ...]
    constants: tuple[float, ...]
    divergent: bool

    def drift(self) -> float:
        """Relative change across the last two depths."""
        a, b = self.constants[-2:]
        return abs(b - a) / abs(a)

    def to_dict(self) -> dict[str, Any]:
        return {"depths": list(self.depths), "constants": list(self.constants), "divergent": self.divergent}


def refinement_profile(
    weight: Callable[[DomainBox], GridFunction],
    estimator: Callable[[GridFunction, DyadicFamily], WeightReport],
    root: DomainBox,
    depths: Sequence[int],
) -> DepthProfile:
    """Run ``estimator`` with the finest cubes equal to one cell, depth by depth.

    The family depth is capped by ``log2`` of the resolution, so following a
    closed-form weight to deeper cubes means resampling it; this is where
    a singular weight shows its growth.
    """
    ds = tuple(int(d) for d in depths)
    if len(ds) < 2 or any(b <= a for a, b in zip(ds, ds[1:])):
        raise ValueError("depths must be increasing, at least two of them")
    out = []
    divergent = False
    for d in ds:
        dom = root.with_resolution((1 << d,) * root.n)
        rep = estimator(weight(dom), DyadicFamily(dom, d))
        out.append(rep.constant)
        divergent = divergent or bool(rep.infinite_cubes)
    return DepthProfile(ds, tuple(out), divergent or is_divergent(out))


def _same_grid(w: GridFunction, fam: DyadicFamily) -> None:
    if w.domain != fam.root:
        raise ValueError("weight and dyadic family live on different grids")
