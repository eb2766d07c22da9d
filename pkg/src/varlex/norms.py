"""Modular and Luxemburg norm of L^{p(.)}, and the weak-type quasi-norm."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exponent import ExponentField
from .grid import GridFunction

__all__ = ["ModularValue", "exponent_samples", "luxemburg_norm", "modular", "weak_quasinorm"]

DEFAULT_TOL = 1e-9
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class ModularValue:
    value: float
    finite: bool

    def __float__(self) -> float:
        return self.value


def exponent_samples(p: ExponentField | GridFunction | float, f: GridFunction) -> np.ndarray | float:
    """Exponent values at the midpoints of ``f``'s grid (a scalar for constants)."""
    if isinstance(p, (int, float)):
        return float(p)
    if isinstance(p, GridFunction):
        if p.domain != f.domain:
            raise ValueError("exponent samples live on a different grid")
        return p.values
    if p.kind == "constant":
        return p.p_minus
    return p(f.domain.mesh())


def _modular_raw(a: np.ndarray, e: np.ndarray | float, lam: float, scale: float) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        terms = np.power(a / lam, e)
        total = float(np.sum(terms)) * scale
    return total if math.isfinite(total) else math.inf


def modular(f: GridFunction, p: ExponentField | GridFunction | float, lam: float = 1.0) -> ModularValue:
    """Midpoint quadrature of ``(|f|/lam)^p(x)``; overflow saturates to +inf."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    d = f.domain
    total = _modular_raw(np.abs(f.values), exponent_samples(p, f), lam, d.volume / d.size)
    return ModularValue(total, math.isfinite(total))


def luxemburg_norm(
    f: GridFunction, p: ExponentField | GridFunction | float, tol: float = DEFAULT_TOL
) -> float:
    """``inf{lam > 0 : modular(f/lam) <= 1}`` by bisection on ``log lam``.

    Returns ``lam`` with modular in ``[1 - tol, 1 + tol]``, or 0 for ``f = 0``.
    """
    a = np.abs(f.values)
    big = float(a.max())
    if big == 0.0:
        return 0.0
    d = f.domain
    scale = d.volume / d.size
    e = exponent_samples(p, f)
    # zero cells add nothing to the modular
    nz = a > 0
    if not nz.all():
        a = a[nz]
        if isinstance(e, np.ndarray):
            e = e[nz]

    def rho(lam: float) -> float:
        return _modular_raw(a, e, lam, scale)

    lo = big * min(1.0, d.volume)
    hi = big * max(1.0, d.volume)
    for _ in range(MAX_BISECTIONS):
        if rho(lo) >= 1.0:
            break
        lo *= 0.5
    for _ in range(MAX_BISECTIONS):
        if rho(hi) <= 1.0:
            break
        hi *= 2.0
    r_lo, r_hi = rho(lo), rho(hi)
    if abs(r_lo - 1.0) <= tol:
        return lo
    if abs(r_hi - 1.0) <= tol:
        return hi
    for _ in range(MAX_BISECTIONS):
        mid = math.sqrt(lo * hi)
        r = rho(mid)
        if abs(r - 1.0) <= tol:
            return mid
        if r > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * math.ulp(hi):
            return hi
    raise RuntimeError(
        f"Luxemburg bisection did not converge: bracket [{lo!r}, {hi!r}], "
        f"modulars [{rho(lo)!r}, {rho(hi)!r}]"
    )


def weak_quasinorm(
    g: GridFunction, q: ExponentField | GridFunction | float, t_grid: Sequence[float]
) -> float:
    """``max_t t * ||indicator{g > t}||_q`` over the levels in ``t_grid``."""
    ts = [float(t) for t in t_grid]
    if not ts or min(ts) <= 0:
        raise ValueError("t_grid must be non-empty and positive")
    best = 0.0
    for t in ts:
        mask = g.values > t
        if not mask.any():
            continue
        best = max(best, t * luxemburg_norm(g.with_values(mask.astype(float)), q))
    return best
