"""Spike counterexample for non-invariant exponents, and the periodic-matrix necessity scan.

When ``p(A y0) > p(y0)`` the function ``f(y) = 1_B(y) |y - y0|^-beta``
with ``B = B(y0, r)`` lies in ``L^{p(.)}`` while the modular of ``T_A f``
over ``B(A y0, eps)`` is infinite.  On a grid the divergence shows up as a
power law in the inner cutoff of an annulus around ``A y0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.stats import qmc

from .exponent import ExponentField, sobolev_exponent
from .grid import Ball, DomainBox, GridFunction
from .matrices import spectral_norm
from .norms import luxemburg_norm, modular
from .operators import KernelSpec, apply_T_at

__all__ = [
    "CounterexampleSpec",
    "DivergenceReport",
    "NecessityReport",
    "build_counterexample",
    "derive_spec",
    "divergence_experiment",
    "necessity_scan",
    "spike_modular",
    "worked_exponent",
]

MAX_HALVINGS = 60
SLOPE_TOL = 0.15
STABILITY_TOL = 0.05
BALL_SAMPLES = 257


def worked_exponent() -> ExponentField:
    """``p(x) = 7/6 + x/6`` clipped to ``[1.1, 1.9]``: ``p(1) = 4/3``, ``p(2) = 3/2``, ``p_plus < 2``."""

    def ev(x: np.ndarray) -> np.ndarray:
        return np.clip(7.0 / 6.0 + x[..., 0] / 6.0, 1.1, 1.9)

    return ExponentField.expression(ev, 1.1, 1.9, "clip(7/6 + x/6, 1.1, 1.9)")


def _sob(t: float, alpha: float, n: int) -> float:
    return n * t / (n - alpha * t)


def _ball_points(center: np.ndarray, radius: float, count: int = BALL_SAMPLES) -> np.ndarray:
    """Deterministic points filling the closed ball, centre included."""
    n = center.size
    if n == 1:
        return center + np.linspace(-radius, radius, count)[:, None]
    u = qmc.Halton(d=2, seed=0).random(count)
    rho = radius * np.sqrt(u[:, 0])
    th = 2 * np.pi * u[:, 1]
    pts = center + np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1)
    ring = center + radius * np.stack(
        [np.cos(np.linspace(0, 2 * np.pi, 64, endpoint=False)), np.sin(np.linspace(0, 2 * np.pi, 64, endpoint=False))],
        axis=-1,
    )
    return np.concatenate([center[None], pts, ring])


def _sphere_area(n: int) -> float:
    # surface measure of the unit sphere: 2 in R^1, 2 pi in R^2
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True, eq=False)
class CounterexampleSpec:
    A: np.ndarray
    y0: tuple[float, ...]
    p: ExponentField
    alpha: float
    n: int
    p0: float
    p1: float
    q0v: float
    q1v: float
    gamma: float
    beta: float
    delta: float
    r: float
    eps: float
    M: float

    @property
    def Ay0(self) -> np.ndarray:
        return np.asarray(self.A, dtype=float) @ np.asarray(self.y0, dtype=float)

    @property
    def predicted_slope(self) -> float:
        return self.n - (self.beta - self.alpha) * (self.q1v - self.gamma)

    def kernel_factor(self, d: float) -> float:
        """Lower bound for ``T_A f(x)`` at ``|x - A y0| = d``.

        From ``|x - Ay| <= 2 d`` on ``B(y0, d/M)`` and the integral of the
        spike over that ball.
        """
        n, b = self.n, self.beta
        return (2 * d) ** (self.alpha - n) * _sphere_area(n) * (d / self.M) ** (n - b) / (n - b)

    def verify(self) -> None:
        """Re-check every invariant numerically; raise on the first failure."""
        checks = [
            (self.p1 > self.p0, f"p(Ay0) = {self.p1} must exceed p(y0) = {self.p0}"),
            (self.gamma > 0, f"gamma = {self.gamma} must be positive"),
            (
                abs(self.gamma - (self.q1v - self.q0v) / 2) <= 1e-12 * max(1.0, self.q1v),
                "gamma must equal (q(Ay0) - q(y0)) / 2",
            ),
            (
                (self.beta - self.alpha) * (self.q1v - self.gamma) > self.n,
                f"(beta - alpha)(q1 - gamma) = {(self.beta - self.alpha) * (self.q1v - self.gamma)} must exceed n",
            ),
            (self.delta > 0, f"delta = {self.delta} must be positive"),
            (
                abs(self.beta - self.n / self.p0 * (1 - self.delta)) <= 1e-12,
                "beta must equal (n/p0)(1 - delta)",
            ),
            (self.r > 0, "r must be positive (empty ball)"),
            (0 < self.eps < self.M * self.r, f"need 0 < eps = {self.eps} < M r = {self.M * self.r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"counterexample invariant fails: {msg}")
        y0 = np.asarray(self.y0, dtype=float)
        pts = _ball_points(y0, self.r)
        if np.any(self.p(pts) >= self.p0 / (1 - self.delta)):
            raise ValueError("counterexample invariant fails: B(y0, r) leaves {p < p0/(1 - delta)}")
        q = sobolev_exponent(self.p, self.alpha, self.n).q
        if np.any(q(_ball_points(self.Ay0, self.eps)) <= self.q1v - self.gamma):
            raise ValueError("counterexample invariant fails: q <= q(Ay0) - gamma somewhere on B(Ay0, eps)")
        if not self.kernel_factor(self.eps) > 1:
            raise ValueError("counterexample invariant fails: kernel lower bound <= 1 at eps")

    def to_dict(self) -> dict[str, Any]:
        return {
            "A": np.asarray(self.A).tolist(),
            "y0": list(self.y0),
            "p": self.p.describe(),
            "alpha": self.alpha,
            "n": self.n,
            "p0": self.p0,
            "p1": self.p1,
            "q0v": self.q0v,
            "q1v": self.q1v,
            "gamma": self.gamma,
            "beta": self.beta,
            "delta": self.delta,
            "r": self.r,
            "eps": self.eps,
            "M": self.M,
            "predictedSlope": self.predicted_slope,
        }


def derive_spec(
    p: ExponentField, A: np.ndarray, y0: Sequence[float], alpha: float, n: int, r0: float = 1.0
) -> CounterexampleSpec:
    """Parameters of the spike counterexample at ``y0``.

    ``r`` and ``eps`` come from halving ``r0`` and ``M r / 2`` until the
    exponent conditions hold on sampled points of the balls.
    """
    A = np.asarray(A, dtype=float).reshape(n, n)
    y = np.asarray(y0, dtype=float).reshape(n)
    p0 = float(p(y[None])[0])
    p1 = float(p((A @ y)[None])[0])
    if not p1 > p0:
        raise ValueError(f"hypothesis not violated: p(Ay0) = {p1} <= p(y0) = {p0}")
    if not 0 < alpha < n:
        raise ValueError(f"need 0 < alpha < n, got {alpha}")
    for v, where in ((p0, "y0"), (p1, "Ay0")):
        if v >= n / alpha:
            raise ValueError(f"Sobolev exponent undefined: p({where}) = {v} >= n/alpha = {n / alpha}")
    q = sobolev_exponent(p, alpha, n).q
    q0v, q1v = _sob(p0, alpha, n), _sob(p1, alpha, n)
    gamma = (q1v - q0v) / 2
    beta = n / p0 - 0.5 * (n / p0 - (alpha + n / (q1v - gamma)))
    delta = 1 - beta * p0 / n
    M = spectral_norm(A)
    Ay0 = A @ y

    r = float(r0)
    for _ in range(MAX_HALVINGS):
        if np.all(p(_ball_points(y, r)) < p0 / (1 - delta)):
            break
        r /= 2
    else:
        raise ValueError("no admissible r after 60 halvings")

    eps = M * r / 2
    partial = CounterexampleSpec(A, tuple(y.tolist()), p, float(alpha), n, p0, p1, q0v, q1v, gamma, beta, delta, r, eps, M)
    for _ in range(MAX_HALVINGS):
        if np.all(q(_ball_points(Ay0, eps)) > q1v - gamma) and partial.kernel_factor(eps) > 1:
            break
        eps /= 2
    else:
        raise ValueError("no admissible eps after 60 halvings")
    spec = CounterexampleSpec(A, tuple(y.tolist()), p, float(alpha), n, p0, p1, q0v, q1v, gamma, beta, delta, r, eps, M)
    spec.verify()
    return spec


def _spike(spec: CounterexampleSpec, domain: DomainBox) -> GridFunction:
    x = domain.mesh()
    c = np.asarray(spec.y0, dtype=float)
    d = np.linalg.norm(x - c, axis=-1)
    inside = Ball(spec.y0, spec.r).contains(x)
    if np.any(inside & (d == 0)):
        raise ValueError("a midpoint coincides with y0; shift the grid")
    with np.errstate(divide="ignore"):
        vals = np.where(inside, np.where(d > 0, d, 1.0) ** (-spec.beta), 0.0)
    return GridFunction(domain, vals)


def spike_modular(spec: CounterexampleSpec, domain: DomainBox) -> tuple[float, float, float]:
    """Midpoint modular of the spike on ``domain`` and two extrapolated limits.

    Near ``y0`` the integrand is ``|y - y0|^-s`` with ``s = beta p0 < n``, so
    the midpoint sum converges only like ``h^(n - s)``; for the worked
    spec ``n - s = 1/30``.  Eliminating that term (Richardson with the known
    order) from the sums on ``h, h/2`` and on ``h/2, h/4`` gives two
    estimates of the limit; they agree when the modular is finite.
    """
    s_loc = spec.beta * spec.p0
    if s_loc >= spec.n:
        raise ValueError(f"spec inconsistent: local exponent beta p0 = {s_loc} >= n")
    m = [modular(_spike(spec, domain.refine(1 << k)), spec.p).value for k in range(3)]
    if not all(math.isfinite(v) for v in m):
        raise ValueError("spec inconsistent: the modular overflows")
    r = 2.0 ** (spec.n - s_loc)
    return m[0], (m[1] * r - m[0]) / (r - 1), (m[2] * r - m[1]) / (r - 1)


def build_counterexample(spec: CounterexampleSpec, domain: DomainBox, check: bool = True) -> GridFunction:
    """Sample ``1_B(y) |y - y0|^-beta`` with ``B = B(y0, r)``.

    With ``check`` the modular of ``f`` must be stable under refinement:
    the extrapolated limits of :func:`spike_modular` must agree within 5%.
    """
    if not spec.r > 0:
        raise ValueError("empty ball: r must be positive")
    c = np.asarray(spec.y0, dtype=float)
    if np.any(c - spec.r < np.asarray(domain.lo)) or np.any(c + spec.r > np.asarray(domain.hi)):
        raise ValueError("the ball B(y0, r) must lie inside the domain")
    f = _spike(spec, domain)
    if f.is_zero():
        raise ValueError("the ball B(y0, r) holds no midpoint; refine the grid")
    if check and spec.beta > 0:
        _, e1, e2 = spike_modular(spec, domain)
        if abs(e2 - e1) >= STABILITY_TOL * abs(e2):
            raise ValueError(f"spec inconsistent: extrapolated modular {e1} -> {e2} under refinement")
    return f


@dataclass(frozen=True)
class DivergenceReport:
    cutoffs: tuple[float, ...]
    modulars: tuple[float, ...]
    slope: float
    predicted_slope: float
    passed: bool
    norm_f: float
    skipped_cells: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "cutoffs": list(self.cutoffs),
            "modulars": list(self.modulars),
            "slope": self.slope,
            "predictedSlope": self.predicted_slope,
            "pass": self.passed,
            "normF": self.norm_f,
        }


def divergence_experiment(
    spec: CounterexampleSpec,
    f: GridFunction,
    cutoffs: Sequence[float],
    p: ExponentField | None = None,
    threads: int = 1,
) -> DivergenceReport:
    """Annulus modulars ``m(c) = int_{c < |x - A y0| < eps} (T_A f)^q(x) dx`` and their log-log slope.

    ``T_A f`` is evaluated at the midpoints of a grid with the input cell
    width covering ``B(A y0, eps)``.  ``p`` overrides the exponent (for the
    invariant control run); by default it is the spec's.  Passing requires
    the fitted slope to be at most ``0.85 * predicted_slope``.
    """
    if f.is_zero():
        raise ValueError("f vanishes; nothing to measure")
    n = spec.n
    p = spec.p if p is None else p
    q = sobolev_exponent(p, spec.alpha, n).q
    h = max(f.domain.h)
    cs = sorted((float(c) for c in cutoffs), reverse=True)
    usable = [c for c in cs if 2 * h < c < spec.eps]
    if len(usable) < 3:
        raise ValueError(f"refine grid: only {len(usable)} cutoffs lie in (2h, eps) = ({2 * h}, {spec.eps})")
    c = spec.Ay0
    cells = int(math.ceil(2 * spec.eps / h))
    box = DomainBox(tuple((c - cells * h / 2).tolist()), tuple((c + cells * h / 2).tolist()), (cells,) * n)
    x = box.points()
    d = np.linalg.norm(x - c, axis=-1)
    keep = (d > usable[-1]) & (d < spec.eps)
    k = KernelSpec.from_alphas([np.asarray(spec.A, dtype=float)], [n - spec.alpha])
    tf = apply_T_at(f, k, x[keep], threads)
    integrand = np.abs(tf) ** q(x[keep]) * box.cell_volume
    dk = d[keep]
    mods = [float(np.sum(np.where(dk > cut, integrand, 0.0))) for cut in usable]
    lx, ly = np.log(usable), np.log(mods)
    slope = float(np.polyfit(lx, ly, 1)[0])
    pred = spec.predicted_slope
    return DivergenceReport(
        tuple(usable), tuple(mods), slope, pred, bool(slope <= pred * (1 - SLOPE_TOL)),
        luxemburg_norm(f, p), int(np.sum(tf == 0)),
    )


@dataclass(frozen=True)
class NecessityReport:
    violations: int
    samples: int
    N: int
    points: tuple[dict[str, Any], ...]

    def to_dict(self) -> dict[str, Any]:
        return {"violations": self.violations, "samples": self.samples, "N": self.N, "points": list(self.points)}


def necessity_scan(
    p: ExponentField,
    A: np.ndarray,
    N: int,
    samples: int,
    bounds: tuple[float, float] = (-2.0, 2.0),
    seed: int = 0,
    tol: float = 1e-9,
    keep: int = 20,
) -> NecessityReport:
    """Sample ``y`` in the cube ``bounds^n`` and look for ``p(Ay) != p(y)`` when ``A^N = I``.

    For each violation the orbit ``p(y), p(Ay), ..., p(A^N y) = p(y)`` is
    recorded together with the first step ``z = A^k y`` where ``p`` goes up,
    which is a point where the spike counterexample applies.  The first
    ``keep`` violations are stored.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if N < 1:
        raise ValueError("N must be >= 1")
    if np.linalg.norm(np.linalg.matrix_power(A, N) - np.eye(n)) >= 1e-9:
        raise ValueError(f"Corollary hypothesis fails: A^{N} != I")
    lo, hi = (float(b) for b in bounds)
    u = qmc.Halton(d=n, seed=seed).random(samples)
    y = lo + u * (hi - lo)
    orbit = [y]
    for _ in range(N):
        orbit.append(orbit[-1] @ A.T)
    vals = np.stack([p(o) for o in orbit], axis=-1)  # (samples, N + 1)
    bad = np.abs(vals[:, 1] - vals[:, 0]) > tol
    points = []
    for i in np.nonzero(bad)[0][:keep]:
        up = np.nonzero(vals[i, 1:] - vals[i, :-1] > tol)[0]
        step = int(up[0]) if up.size else -1
        points.append(
            {
                "y": y[i].tolist(),
                "orbit": vals[i].tolist(),
                "increaseStep": step,
                "z": orbit[step][i].tolist() if step >= 0 else None,
            }
        )
    return NecessityReport(int(bad.sum()), int(samples), int(N), tuple(points))
