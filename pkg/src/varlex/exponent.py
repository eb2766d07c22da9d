"""Variable exponents p(.) and the exponents derived from them.

An :class:`ExponentField` is a vectorised evaluator together with its
bounds ``p_minus`` / ``p_plus``.  Closed forms are preferred over tables so
that ``p(Ax)`` can be evaluated off the grid exactly.

Bounds of closed forms are the inf/sup over all of R^n.  ``restrict`` gives
the bounds over a truncation box, which is what conjugates of the
normalised Sobolev exponent need: ``q/q0`` touches 1 only where ``p``
reaches its infimum, usually at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .grid import DomainBox, GridFunction, interpolate

__all__ = [
    "DerivedExponents",
    "ExponentField",
    "InvarianceReport",
    "LogHolderReport",
    "check_log_holder",
    "check_matrix_invariance",
    "conjugate",
    "sobolev_exponent",
]

_BOUND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ExponentField:
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    p_minus: float
    p_plus: float
    kind: str = "expression"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lo, hi = float(self.p_minus), float(self.p_plus)
        if not (1.0 <= lo <= hi):
            raise ValueError(f"need 1 <= p_minus <= p_plus, got [{lo}, {hi}]")
        if not math.isfinite(hi):
            raise ValueError("p_plus must be finite")
        object.__setattr__(self, "p_minus", lo)
        object.__setattr__(self, "p_plus", hi)

    # construction ---------------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> ExponentField:
        value = float(value)

        def ev(x: np.ndarray) -> np.ndarray:
            return np.full(np.shape(x)[:-1], value)

        return cls(ev, value, value, "constant", {"value": value})

    @classmethod
    def radial(cls, a: float, b: float, center: Sequence[float] | None = None) -> ExponentField:
        """``a + b / (1 + |x - center|)``."""
        a, b = float(a), float(b)
        c = None if center is None else np.asarray(center, dtype=float)

        def ev(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            if c is not None:
                x = x - c
            return a + b / (1.0 + np.sqrt(np.sum(x * x, axis=-1)))

        lo, hi = (a, a + b) if b >= 0 else (a + b, a)
        params = {"a": a, "b": b}
        if c is not None:
            params["center"] = c.tolist()
        return cls(ev, lo, hi, "radial", params)

    @classmethod
    def piecewise(
        cls, breaks: Sequence[float], values: Sequence[float], axis: int = 0
    ) -> ExponentField:
        """``values[k]`` on ``[breaks[k-1], breaks[k])`` along coordinate ``axis``."""
        br = np.asarray(breaks, dtype=float)
        vals = np.asarray(values, dtype=float)
        if len(vals) != len(br) + 1:
            raise ValueError("piecewise exponent needs len(values) == len(breaks) + 1")
        if np.any(np.diff(br) <= 0):
            raise ValueError("breaks must be strictly increasing")

        def ev(x: np.ndarray) -> np.ndarray:
            t = np.asarray(x, dtype=float)[..., axis]
            return vals[np.searchsorted(br, t, side="right")]

        return cls(
            ev,
            float(vals.min()),
            float(vals.max()),
            "piecewise",
            {"breaks": br.tolist(), "values": vals.tolist(), "axis": axis},
        )

    @classmethod
    def table(cls, samples: GridFunction) -> ExponentField:
        """Multilinear interpolation of grid samples, clamped outside the table box."""
        d = samples.domain
        lo, hi = np.asarray(d.lo), np.asarray(d.hi)

        def ev(x: np.ndarray) -> np.ndarray:
            return interpolate(samples, np.clip(np.asarray(x, dtype=float), lo, hi))

        return cls(
            ev,
            float(samples.values.min()),
            float(samples.values.max()),
            "table",
            {"domain": d.to_dict(), "cell_width": max(d.h)},
        )

    @classmethod
    def expression(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        p_minus: float,
        p_plus: float,
        label: str = "",
    ) -> ExponentField:
        return cls(fn, p_minus, p_plus, "expression", {"label": label})

    @classmethod
    def sampled_expression(
        cls, fn: Callable[[np.ndarray], np.ndarray], domain: DomainBox, label: str = ""
    ) -> ExponentField:
        """Expression whose bounds are taken from samples over ``domain``."""
        lo, hi = _sampled_bounds(fn, domain)
        return cls(fn, lo, hi, "expression", {"label": label})

    # evaluation -----------------------------------------------------------

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def on(self, domain: DomainBox) -> GridFunction:
        return GridFunction(domain, self(domain.mesh()))

    @property
    def is_closed_form(self) -> bool:
        return self.kind != "table"

    def restrict(self, domain: DomainBox) -> ExponentField:
        """Same evaluator, bounds taken over ``domain`` only."""
        if self.kind == "constant":
            return self
        if self.kind == "radial":
            a, b = self.params["a"], self.params["b"]
            c = np.asarray(self.params.get("center", np.zeros(domain.n)))
            lo, hi = np.asarray(domain.lo) - c, np.asarray(domain.hi) - c
            near = np.sqrt(np.sum(np.maximum(0.0, np.maximum(lo, -hi)) ** 2))
            far = np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2))
            v1, v2 = a + b / (1 + near), a + b / (1 + far)
            pm, pp = min(v1, v2), max(v1, v2)
        else:
            pm, pp = _sampled_bounds(self.evaluator, domain)
        return ExponentField(self.evaluator, pm, pp, self.kind, dict(self.params, restricted=True))

    def describe(self) -> dict[str, Any]:
        out = {"kind": self.kind, "p_minus": self.p_minus, "p_plus": self.p_plus}
        out.update({k: v for k, v in self.params.items() if k != "domain"})
        return out


def _sampled_bounds(fn: Callable[[np.ndarray], np.ndarray], domain: DomainBox) -> tuple[float, float]:
    mids = np.asarray(fn(domain.mesh()), dtype=float)
    node_axes = [np.linspace(a, b, r + 1) for a, b, r in zip(domain.lo, domain.hi, domain.resolution)]
    nodes = np.stack(np.meshgrid(*node_axes, indexing="ij"), axis=-1)
    vals = np.concatenate([mids.ravel(), np.asarray(fn(nodes), dtype=float).ravel()])
    return float(vals.min()), float(vals.max())


def _map_field(
    p: ExponentField, g: Callable[[np.ndarray], np.ndarray], increasing: bool, kind: str, params: dict
) -> ExponentField:
    def ev(x: np.ndarray) -> np.ndarray:
        return g(p(x))

    a, b = float(g(np.float64(p.p_minus))), float(g(np.float64(p.p_plus)))
    lo, hi = (a, b) if increasing else (b, a)
    # rounding in g can push a bound a hair past 1
    lo = max(lo, 1.0) if lo > 1.0 - _BOUND_SLACK else lo
    return ExponentField(ev, lo, max(hi, lo), kind, params)


def conjugate(p: ExponentField) -> ExponentField:
    """Pointwise Hölder conjugate ``p' = p / (p - 1)``."""
    if p.p_minus <= 1.0:
        raise ValueError("conjugate unbounded: p_minus = 1 gives p' = infinity")
    if p.kind == "constant":
        v = p.params["value"]
        return ExponentField.constant(v / (v - 1.0))
    return _map_field(p, lambda t: t / (t - 1.0), False, "conjugate", {"of": p.describe()})


@dataclass(frozen=True)
class DerivedExponents:
    q: ExponentField
    q0: float
    q_tilde: ExponentField
    q_tilde_conj: ExponentField | None
    alpha: float
    n: int


def sobolev_exponent(
    p: ExponentField, alpha: float, n: int, domain: DomainBox | None = None
) -> DerivedExponents:
    """``q`` with ``1/p - 1/q = alpha/n``, plus ``q0``, ``q/q0`` and its conjugate.

    ``q0 = n p_minus / (n - alpha p_minus)`` uses the global infimum of ``p``.
    When ``domain`` is given, ``q/q0`` gets its bounds over that box, so the
    conjugate exists whenever ``p`` stays above its infimum there; otherwise
    ``q_tilde_conj`` is ``None``.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha < n:
        raise ValueError(f"need 0 <= alpha < n, got alpha = {alpha}, n = {n}")
    if alpha > 0 and p.p_plus >= n / alpha:
        raise ValueError(
            f"Sobolev exponent undefined: p_plus = {p.p_plus} >= n/alpha = {n / alpha}"
        )

    def sob(t: np.ndarray) -> np.ndarray:
        return n * t / (n - alpha * t)

    if alpha == 0.0:
        q = p
    elif p.kind == "constant":
        q = ExponentField.constant(float(sob(np.float64(p.params["value"]))))
    else:
        q = _map_field(p, sob, True, "sobolev", {"of": p.describe(), "alpha": alpha, "n": n})
    q0 = float(sob(np.float64(p.p_minus)))

    def tilde(t: np.ndarray) -> np.ndarray:
        return np.maximum(t / q0, 1.0)

    if q.kind == "constant":
        qt = ExponentField.constant(1.0 if q.p_minus == q0 else q.p_minus / q0)
    else:
        qt = ExponentField(
            lambda x: tilde(q(x)),
            max(1.0, q.p_minus / q0),
            max(1.0, q.p_plus / q0),
            "sobolev_normalised",
            {"q0": q0},
        )
    if domain is not None:
        qt = qt.restrict(domain)
    qtc = conjugate(qt) if qt.p_minus > 1.0 else None
    return DerivedExponents(q=q, q0=q0, q_tilde=qt, q_tilde_conj=qtc, alpha=alpha, n=n)


@dataclass(frozen=True)
class LogHolderReport:
    c_local: float
    c_infinity: float
    worst_pair: tuple[tuple[float, ...], tuple[float, ...]]
    pairs_local: int
    pairs_infinity: int


def check_log_holder(
    p: ExponentField,
    domain: DomainBox,
    sample_pairs: int,
    seed: int = 0,
    pairs: tuple[np.ndarray, np.ndarray] | None = None,
) -> LogHolderReport:
    """Smallest constants making both log-Hölder inequalities hold on a sample.

    Local: ``|p(x)-p(y)| <= c / (-log|x-y|)`` for ``|x-y| < 1/2``.
    At infinity: ``|p(x)-p(y)| <= c / log(e+|x|)`` for ``|y| >= |x|``.
    The result bounds the constants from below on the sample; it proves nothing.
    """
    if sample_pairs < 1:
        raise ValueError("sample_pairs must be >= 1")
    n = domain.n
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    if pairs is not None:
        X = np.asarray(pairs[0], dtype=float).reshape(-1, n)
        Y = np.asarray(pairs[1], dtype=float).reshape(-1, n)
        XL, YL, XI, YI = X, Y, X, Y
    else:
        u = qmc.Halton(d=2 * n + 1, seed=seed).random(sample_pairs)
        XL = lo + u[:, :n] * (hi - lo)
        dist = np.exp(np.log(1e-6) + u[:, n] * (np.log(0.5) - np.log(1e-6)))
        if n == 1:
            direction = np.where(u[:, n + 1 : n + 2] < 0.5, -1.0, 1.0)
        else:
            th = 2 * np.pi * u[:, n + 1]
            direction = np.stack([np.cos(th), np.sin(th)], axis=-1)
        YL = XL + dist[:, None] * direction
        keep = domain.contains(YL)
        XL, YL = XL[keep], YL[keep]
        v = qmc.Halton(d=2 * n, seed=seed + 1).random(sample_pairs)
        XI = lo + v[:, :n] * (hi - lo)
        YI = lo + v[:, n:] * (hi - lo)

    # local condition
    dl = np.linalg.norm(XL - YL, axis=-1)
    m = (dl < 0.5) & (dl > 0)
    with np.errstate(divide="ignore"):
        rl = np.abs(p(XL[m]) - p(YL[m])) * (-np.log(dl[m]))
    # condition at infinity, ordered so that |y| >= |x|
    nx, ny = np.linalg.norm(XI, axis=-1), np.linalg.norm(YI, axis=-1)
    swap = ny < nx
    Xs = np.where(swap[:, None], YI, XI)
    Ys = np.where(swap[:, None], XI, YI)
    ri = np.abs(p(Xs) - p(Ys)) * np.log(np.e + np.linalg.norm(Xs, axis=-1))

    c_local = float(rl.max()) if rl.size else 0.0
    c_inf = float(ri.max()) if ri.size else 0.0
    if c_local >= c_inf and rl.size:
        k = int(np.argmax(rl))
        worst = (tuple(XL[m][k]), tuple(YL[m][k]))
    elif ri.size:
        k = int(np.argmax(ri))
        worst = (tuple(Xs[k]), tuple(Ys[k]))
    else:
        worst = ((), ())
    return LogHolderReport(c_local, c_inf, worst, int(rl.size), int(ri.size))


@dataclass(frozen=True)
class InvarianceReport:
    max_deviation: float
    worst_point: tuple[float, ...]
    tol: float
    passed: bool


def check_matrix_invariance(
    p: ExponentField, A: np.ndarray, domain: DomainBox, tol: float | None = None
) -> InvarianceReport:
    """``max |p(Ax) - p(x)|`` over the midpoints of ``domain``."""
    A = np.asarray(A, dtype=float).reshape(domain.n, domain.n)
    scale = max(1.0, float(np.abs(A).max()))
    if abs(np.linalg.det(A)) <= 1e-12 * scale**domain.n:
        raise ValueError("matrix is singular")
    if tol is None:
        tol = 1e-9 if p.is_closed_form else 10.0 * p.params["cell_width"] ** 2
    x = domain.points()
    dev = np.abs(p(x @ A.T) - p(x))
    k = int(np.argmax(dev))
    md = float(dev[k])
    return InvarianceReport(md, tuple(float(c) for c in x[k]), float(tol), md <= tol)
