"""Uniform midpoint grids over boxes in R^n (n = 1 or 2).

Every function the library touches (f, h, weights, operator outputs) is a
:class:`GridFunction`: one real sample per cell, taken at the cell midpoint.
Midpoints never coincide with grid nodes, which keeps singular integrands
away from their poles whenever the singular set is aligned with the nodes.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Ball",
    "Box",
    "DomainBox",
    "GridFunction",
    "indicator",
    "integrate",
    "interpolate",
    "pointwise_map",
    "sample",
]


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box ``[lo, hi]`` split into ``resolution`` cells per axis."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        res = tuple(int(v) for v in np.atleast_1d(self.resolution))
        if len(res) == 1 and len(lo) > 1:
            res = res * len(lo)
        if not (len(lo) == len(hi) == len(res)):
            raise ValueError("lo, hi and resolution must have the same length")
        if len(lo) not in (1, 2):
            raise ValueError(f"only n = 1 or 2 is supported, got n = {len(lo)}")
        for i, (a, b, r) in enumerate(zip(lo, hi, res)):
            if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
                raise ValueError(f"axis {i}: need lo < hi, got [{a}, {b}]")
            if r < 2:
                raise ValueError(f"axis {i}: resolution must be >= 2, got {r}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def cube(cls, lo: float, hi: float, resolution: int, n: int = 1) -> DomainBox:
        return cls((lo,) * n, (hi,) * n, (resolution,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / r for a, b, r in zip(self.lo, self.hi, self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.lo, self.hi)]))

    def axes(self) -> list[np.ndarray]:
        """Midpoint coordinates along each axis."""
        return [
            a + (np.arange(r) + 0.5) * (b - a) / r
            for a, b, r in zip(self.lo, self.hi, self.resolution)
        ]

    def points(self) -> np.ndarray:
        """All midpoints as an ``(size, n)`` array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def mesh(self) -> np.ndarray:
        """Midpoints as an array of shape ``resolution + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[(a, b) for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def refine(self, factor: int = 2) -> DomainBox:
        return DomainBox(self.lo, self.hi, tuple(r * factor for r in self.resolution))

    def with_resolution(self, resolution: int | Sequence[int]) -> DomainBox:
        return DomainBox(self.lo, self.hi, resolution)

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def nearest_index(self, x: Sequence[float]) -> tuple[int, ...]:
        """Index of the cell whose midpoint is nearest to ``x``."""
        idx = []
        for xi, a, hi_, r in zip(np.atleast_1d(x), self.lo, self.hi, self.resolution):
            k = int(math.floor((xi - a) / ((hi_ - a) / r)))
            idx.append(min(max(k, 0), r - 1))
        return tuple(idx)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "resolution": list(self.resolution)}


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return np.sqrt(np.sum(d * d, axis=-1)) < self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", tuple(float(c) for c in np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", tuple(float(c) for c in np.atleast_1d(self.hi)))

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lo)) & (x <= np.asarray(self.hi)), axis=-1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a real function at the cell midpoints of ``domain``."""

    domain: DomainBox
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.size != self.domain.size:
            raise ValueError(
                f"expected {self.domain.size} values for resolution "
                f"{self.domain.resolution}, got {v.size}"
            )
        v = v.reshape(self.domain.shape)
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"non-finite sample at index {tuple(int(i) for i in bad)}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, domain: DomainBox, c: float) -> GridFunction:
        return cls(domain, np.full(domain.shape, float(c)))

    @classmethod
    def zeros(cls, domain: DomainBox) -> GridFunction:
        return cls.constant(domain, 0.0)

    def with_values(self, values: np.ndarray) -> GridFunction:
        return GridFunction(self.domain, values)

    def __add__(self, other: GridFunction | float) -> GridFunction:
        if isinstance(other, GridFunction):
            _check_same_domain(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other: GridFunction | float) -> GridFunction:
        if isinstance(other, GridFunction):
            _check_same_domain(self, other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - float(other))

    def __mul__(self, other: GridFunction | float) -> GridFunction:
        if isinstance(other, GridFunction):
            _check_same_domain(self, other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> GridFunction:
        return self.with_values(-self.values)

    def __abs__(self) -> GridFunction:
        return self.with_values(np.abs(self.values))

    def __pow__(self, e: float) -> GridFunction:
        return self.with_values(self.values ** float(e))

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def at(self, x: Sequence[float]) -> float:
        """Value at the midpoint nearest to ``x``."""
        return float(self.values[self.domain.nearest_index(x)])

    def is_zero(self) -> bool:
        return not np.any(self.values)

    # serialization -------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        pts = self.domain.points()
        vals = self.values.ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.domain.n)] + ["value"])
            for p, v in zip(pts, vals):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path) -> GridFunction:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        n = len(rows[0]) - 1
        data = np.array(rows[1:], dtype=float)
        coords = [np.unique(data[:, i]) for i in range(n)]
        res = tuple(len(c) for c in coords)
        h = [(c[1] - c[0]) if len(c) > 1 else 1.0 for c in coords]
        lo = tuple(c[0] - hi / 2 for c, hi in zip(coords, h))
        hi = tuple(c[-1] + hi / 2 for c, hi in zip(coords, h))
        return cls(DomainBox(lo, hi, res), data[:, n])

    def to_bytes(self) -> bytes:
        d = self.domain
        head = struct.pack("<q", d.n)
        head += struct.pack(f"<{d.n}q", *d.resolution)
        head += struct.pack(f"<{d.n}d", *d.lo)
        head += struct.pack(f"<{d.n}d", *d.hi)
        return head + self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> GridFunction:
        (n,) = struct.unpack_from("<q", data, 0)
        off = 8
        res = struct.unpack_from(f"<{n}q", data, off)
        off += 8 * n
        lo = struct.unpack_from(f"<{n}d", data, off)
        off += 8 * n
        hi = struct.unpack_from(f"<{n}d", data, off)
        off += 8 * n
        values = np.frombuffer(data, dtype="<f8", offset=off)
        return cls(DomainBox(lo, hi, res), values)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> GridFunction:
        return cls.from_bytes(Path(path).read_bytes())


def _check_same_domain(f: GridFunction, g: GridFunction) -> None:
    if f.domain != g.domain:
        raise ValueError("grid functions live on different domains")


def sample(domain: DomainBox, fn: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
    """Evaluate ``fn`` at every midpoint; ``fn`` maps ``(..., n)`` points to ``(...)``."""
    vals = np.asarray(fn(domain.mesh()), dtype=float)
    return GridFunction(domain, np.broadcast_to(vals, domain.shape))


def integrate(f: GridFunction) -> float:
    """Midpoint-rule integral of ``f`` over its domain.

    The sum runs over the C-ordered sample array with numpy's pairwise
    reduction, so the result depends only on the samples, never on threading.
    Scaling by ``volume / count`` keeps integrals of constants exact.
    """
    d = f.domain
    return float(np.sum(f.values.ravel()) * d.volume / d.size)


def indicator(domain: DomainBox, region: Ball | Box) -> GridFunction:
    mask = region.contains(domain.mesh())
    if not mask.any():
        raise ValueError(f"region {region} contains no midpoint of the domain")
    return GridFunction(domain, mask.astype(float))


def pointwise_map(f: GridFunction, phi: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
    with np.errstate(all="ignore"):
        out = np.asarray(phi(f.values), dtype=float)
    out = np.broadcast_to(out, f.domain.shape)
    if not np.all(np.isfinite(out)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(out))[0])
        x = tuple(float(a[i]) for a, i in zip(f.domain.axes(), idx))
        raise ValueError(f"non-finite value at midpoint {x} (index {idx})")
    return GridFunction(f.domain, out)


def interpolate(f: GridFunction, x: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Multilinear interpolation of ``f`` at points ``x`` of shape ``(..., n)``.

    Points outside the domain get ``fill``. Inside the domain but beyond the
    outermost midpoints the edge samples are held constant.
    """
    d = f.domain
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d.n:
        raise ValueError(f"points must have trailing dimension {d.n}")
    lead = x.shape[:-1]
    pts = x.reshape(-1, d.n)
    inside = d.contains(pts)
    idx0 = []
    frac = []
    for i in range(d.n):
        r = d.resolution[i]
        s = (pts[:, i] - d.lo[i]) / d.h[i] - 0.5
        s = np.clip(s, 0.0, r - 1.0)
        k = np.minimum(np.floor(s).astype(np.int64), r - 2)
        idx0.append(k)
        frac.append(s - k)
    out = np.zeros(len(pts))
    v = f.values
    if d.n == 1:
        k, t = idx0[0], frac[0]
        out = (1 - t) * v[k] + t * v[k + 1]
    else:
        (k, l), (t, u) = idx0, frac
        out = (
            (1 - t) * (1 - u) * v[k, l]
            + t * (1 - u) * v[k + 1, l]
            + (1 - t) * u * v[k, l + 1]
            + t * u * v[k + 1, l + 1]
        )
    out = np.where(inside, out, fill)
    return out.reshape(lead)
