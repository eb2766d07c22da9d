"""Seeded families of compactly supported test functions.

Each member is a closed-form :class:`TestFunction`, so a sweep can sample
the same function on a grid and on its 2x refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .grid import DomainBox, GridFunction

__all__ = ["TestFunction", "test_family"]

KINDS = ("indicator", "spike", "bump")


@dataclass(frozen=True)
class TestFunction:
    """``kind`` is one of ``indicator`` (sum of weighted boxes), ``spike``
    (``|y - c|^-beta`` on a ball), ``bump`` (smooth, compact support) or
    ``constant`` (not compactly supported; for norms on a bounded box)."""

    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    scale: float = 1.0

    __test__ = False  # not a pytest class

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "indicator":
            out = np.zeros(x.shape[:-1])
            for lo, hi, amp in zip(p["lo"], p["hi"], p["amp"]):
                inside = np.all((x >= np.asarray(lo)) & (x <= np.asarray(hi)), axis=-1)
                out = out + amp * inside
        elif self.kind == "spike":
            r = np.linalg.norm(x - np.asarray(p["center"]), axis=-1)
            with np.errstate(divide="ignore"):
                out = np.where(r < p["radius"], np.power(np.maximum(r, 1e-300), -p["beta"]), 0.0)
        elif self.kind == "bump":
            r = np.linalg.norm(x - np.asarray(p["center"]), axis=-1) / p["radius"]
            with np.errstate(divide="ignore", over="ignore"):
                out = np.where(r < 1, p["amp"] * np.exp(1.0 - 1.0 / np.maximum(1 - r * r, 1e-300)), 0.0)
        elif self.kind == "constant":
            out = np.full(x.shape[:-1], float(p["value"]))
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        return self.scale * out

    def scaled(self, c: float) -> TestFunction:
        return TestFunction(self.kind, self.params, self.scale * float(c))

    def sample(self, domain: DomainBox) -> GridFunction:
        return GridFunction(domain, self(domain.mesh()))

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "scale": self.scale, **self.params}


def test_family(
    seed: int,
    size: int,
    support_lo: Sequence[float],
    support_hi: Sequence[float],
    p_plus: float = 2.0,
    kinds: Sequence[str] = KINDS,
) -> list[TestFunction]:
    """``size`` functions supported in the box ``[support_lo, support_hi]``.

    Kinds cycle in order; spike exponents stay below ``n / (2 p_plus)`` so
    every spike lies in L^{p(.)} with a comfortable margin.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(support_lo, dtype=float)
    hi = np.asarray(support_hi, dtype=float)
    n = lo.size
    width = hi - lo
    out = []
    for i in range(size):
        kind = kinds[i % len(kinds)]
        if kind == "indicator":
            k = int(rng.integers(1, 4))
            los, his, amps = [], [], []
            for _ in range(k):
                a = lo + rng.uniform(0.0, 0.7, n) * width
                b = a + rng.uniform(0.1, 0.3, n) * width
                los.append(a.tolist())
                his.append(np.minimum(b, hi).tolist())
                amps.append(float(rng.uniform(0.5, 2.0)))
            out.append(TestFunction("indicator", {"lo": los, "hi": his, "amp": amps}))
        elif kind == "spike":
            radius = float(rng.uniform(0.15, 0.4) * width.min())
            center = lo + radius + rng.uniform(0, 1, n) * (width - 2 * radius)
            beta = float(rng.uniform(0.1, 0.5) * n / p_plus)
            out.append(
                TestFunction("spike", {"center": center.tolist(), "radius": radius, "beta": beta})
            )
        elif kind == "bump":
            radius = float(rng.uniform(0.15, 0.45) * width.min())
            center = lo + radius + rng.uniform(0, 1, n) * (width - 2 * radius)
            amp = float(rng.uniform(0.5, 2.0))
            out.append(
                TestFunction("bump", {"center": center.tolist(), "radius": radius, "amp": amp})
            )
        else:
            raise ValueError(f"unknown test function kind {kind!r}")
    return out


test_family.__test__ = False  # a factory, not a pytest test
