"""Quadrature for the matrix-kernel operators and the empirical bound checks.

``T f(x) = sum_y prod_i |x - A_i y|^(-alpha_i) f(y) dy`` over the input
cells.  A cell with ``|x - A_i y| < h`` for some ``i`` is dropped and its
mass ``|f(y)| dy`` is reported, so every result carries an estimate of
what the singular cells would have contributed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .exponent import ExponentField, check_matrix_invariance, sobolev_exponent
from .grid import DomainBox, GridFunction
from .matrices import MatrixFamily, compose, validate
from .maximal import MaximalConfig, frac_maximal
from .norms import luxemburg_norm, weak_quasinorm
from .probes import TestFunction

__all__ = [
    "BoundCheckReport",
    "KernelOutput",
    "KernelSpec",
    "FFT_MAX_RESOLUTION",
    "MAX_RESOLUTION",
    "TMReport",
    "TMSweepReport",
    "apply_T",
    "apply_TA",
    "apply_T_at",
    "apply_T_full",
    "bound_sweeps",
    "embed",
    "output_box",
    "resolution_cap",
    "strong_bound_sweep",
    "tm_domination_check",
    "tm_sweep",
    "weak_bound_sweep",
]

MAX_RESOLUTION = {1: 1 << 13, 2: 1 << 7}
FFT_MAX_RESOLUTION = {1: 1 << 16, 2: 1 << 10}  # identity kernel, summed by FFT
PAIR_BLOCK = 1 << 21  # kernel entries per chunk
ALPHA_SUM_TOL = 1e-12
WEAK_LEVELS = 48
REFINE_TOL = 0.10


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Kernel ``prod_i |x - A_i y|^(-alpha_i)`` with ``sum alpha_i = n - alpha``."""

    family: MatrixFamily
    alphas: tuple[float, ...]
    alpha: float

    def __post_init__(self) -> None:
        n = self.family.n
        if len(self.alphas) != self.family.m:
            raise ValueError(f"{self.family.m} matrices but {len(self.alphas)} exponents alpha_i")
        for i, a in enumerate(self.alphas, start=1):
            if not 0.0 < a < n:
                raise ValueError(f"alpha_{i} = {a} must lie in (0, {n})")
        if not 0.0 <= self.alpha < n:
            raise ValueError(f"alpha = {self.alpha} must lie in [0, {n})")
        if abs(math.fsum(self.alphas) - (n - self.alpha)) > ALPHA_SUM_TOL:
            raise ValueError(
                f"sum of alpha_i = {math.fsum(self.alphas)} must equal n - alpha = {n - self.alpha}"
            )

    @classmethod
    def from_alphas(cls, mats: MatrixFamily | Sequence[np.ndarray], alphas: Sequence[float]) -> KernelSpec:
        fam = mats if isinstance(mats, MatrixFamily) else validate(list(mats))
        a = tuple(float(v) for v in alphas)
        return cls(fam, a, fam.n - math.fsum(a))

    @classmethod
    def uniform(cls, mats: MatrixFamily | Sequence[np.ndarray], alpha: float) -> KernelSpec:
        """Split ``n - alpha`` equally among the matrices."""
        fam = mats if isinstance(mats, MatrixFamily) else validate(list(mats))
        return cls(fam, (float(fam.n - alpha) / fam.m,) * fam.m, float(alpha))

    @property
    def n(self) -> int:
        return self.family.n

    def describe(self) -> dict[str, Any]:
        return {**self.family.describe(), "alphas": list(self.alphas), "alpha": self.alpha}


@dataclass(frozen=True)
class KernelOutput:
    field: GridFunction
    skipped: GridFunction

    @property
    def skipped_mass_max(self) -> float:
        return float(self.skipped.values.max())


def output_box(domain: DomainBox, family: MatrixFamily) -> DomainBox:
    """Smallest box on the input lattice holding the input box and every ``A_i`` image of it.

    Sharing the lattice means ``f`` embeds into the output grid exactly.
    """
    c = domain.corners()
    pts = np.concatenate([c] + [c @ A.T for A in family.mats])
    lo0 = np.asarray(domain.lo, dtype=float)
    hi0 = np.asarray(domain.hi, dtype=float)
    h = np.asarray(domain.h)
    below = np.maximum(np.ceil((lo0 - pts.min(axis=0)) / h - 1e-9), 0).astype(int)
    above = np.maximum(np.ceil((pts.max(axis=0) - hi0) / h - 1e-9), 0).astype(int)
    res = tuple(int(r + a + b) for r, a, b in zip(domain.resolution, below, above))
    return DomainBox(tuple((lo0 - below * h).tolist()), tuple((hi0 + above * h).tolist()), res)


def embed(f: GridFunction, out: DomainBox) -> GridFunction:
    """Zero-extend ``f`` onto a larger grid sharing its lattice."""
    d = f.domain
    h = np.asarray(d.h)
    if not np.allclose(np.asarray(out.h), h, rtol=1e-12, atol=0):
        raise ValueError("output grid has a different cell width")
    off = (np.asarray(d.lo) - np.asarray(out.lo)) / h
    k = np.round(off).astype(int)
    if np.any(np.abs(off - k) > 1e-6) or np.any(k < 0) or np.any(k + d.shape > np.asarray(out.shape)):
        raise ValueError("input grid is not a sub-grid of the output grid")
    v = np.zeros(out.shape)
    v[tuple(slice(a, a + s) for a, s in zip(k, d.shape))] = f.values
    return GridFunction(out, v)


def resolution_cap(k: KernelSpec) -> int:
    """Cells per axis allowed for ``T f``: direct sums are quadratic in the grid size, FFTs are not."""
    return (FFT_MAX_RESOLUTION if _is_identity_kernel(k) else MAX_RESOLUTION)[k.n]


def _check_resolution(domain: DomainBox, caps: dict[int, int] = MAX_RESOLUTION) -> None:
    cap = caps[domain.n]
    if max(domain.resolution) > cap:
        raise ValueError(f"resolution {domain.resolution} exceeds the cap {cap} per axis for n = {domain.n}")


def _kernel_sums(
    f: GridFunction, k: KernelSpec, x: np.ndarray, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    d = f.domain
    if d.n != k.n:
        raise ValueError(f"function is {d.n}-dimensional, kernel is {k.n}-dimensional")
    _check_resolution(d)
    vals = f.values.reshape(-1)
    support = np.nonzero(vals)[0]
    x = np.asarray(x, dtype=float).reshape(-1, d.n)
    out = np.zeros(x.shape[0])
    skipped = np.zeros(x.shape[0])
    if support.size == 0 or x.shape[0] == 0:
        return out, skipped
    fy = vals[support]
    ay = [d.points()[support] @ A.T for A in k.family.mats]
    h = max(d.h)
    dv = d.cell_volume
    step = max(1, PAIR_BLOCK // support.size)

    equal = len(set(k.alphas)) == 1
    h2 = h * h

    def chunk(s: int) -> None:
        xs = x[s : s + step]
        skip = np.zeros((xs.shape[0], support.size), dtype=bool)
        kern = np.ones(skip.shape)
        for Ay, a in zip(ay, k.alphas):
            r2 = np.zeros(skip.shape)
            for j in range(d.n):
                diff = xs[:, j, None] - Ay[None, :, j]
                r2 += diff * diff
            near = r2 < h2
            skip |= near
            r2[near] = 1.0
            # equal exponents: one power of the product of squared distances
            kern *= r2 if equal else r2 ** (-0.5 * a)
        if equal:
            kern = kern ** (-0.5 * k.alphas[0])
        kern[skip] = 0.0
        out[s : s + step] = np.sum(kern * fy, axis=1) * dv
        skipped[s : s + step] = np.sum(np.where(skip, np.abs(fy), 0.0), axis=1) * dv

    starts = range(0, x.shape[0], step)
    if threads > 1:
        # chunks write disjoint slices; each chunk sums in a fixed order
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(chunk, starts))
    else:
        for s in starts:
            chunk(s)
    return out, skipped


def _is_identity_kernel(k: KernelSpec) -> bool:
    return k.family.m == 1 and bool(np.array_equal(k.family.mats[0], np.eye(k.n)))


def _convolution_sums(f: GridFunction, k: KernelSpec, out: DomainBox) -> tuple[np.ndarray, np.ndarray]:
    """The ``A = I`` case on a shared lattice: the same sums as a convolution by FFT."""
    _check_resolution(f.domain, FFT_MAX_RESOLUTION)
    g = embed(f, out)
    h = np.asarray(out.h)
    offs = np.meshgrid(*[np.arange(-(s - 1), s) * hh for s, hh in zip(out.shape, h)], indexing="ij")
    r2 = sum(o * o for o in offs)
    near = r2 < max(f.domain.h) ** 2
    kern = np.where(near, 0.0, np.where(near, 1.0, r2) ** (-0.5 * k.alphas[0]))
    dv = out.cell_volume
    v = fftconvolve(g.values, kern, mode="same") * dv
    s = fftconvolve(np.abs(g.values), near.astype(float), mode="same") * dv
    # a nonzero skipped mass is at least one cell of the smallest |f|;
    # anything below half of that is FFT round-off
    a = np.abs(g.values)
    floor = 0.5 * dv * float(a[a > 0].min()) if np.any(a > 0) else math.inf
    s = np.where(s < floor, 0.0, s)
    return v.reshape(-1), s.reshape(-1)


def _shares_lattice(d: DomainBox, out: DomainBox) -> bool:
    try:
        embed(GridFunction.zeros(d), out)
    except ValueError:
        return False
    return True


def apply_T_full(
    f: GridFunction, k: KernelSpec, out: DomainBox | None = None, threads: int = 1
) -> KernelOutput:
    """``T f`` at the midpoints of ``out`` (default :func:`output_box`) with the skipped mass.

    With a single identity matrix the kernel only depends on ``x - y`` and the
    sum is evaluated as an FFT convolution; otherwise directly.
    """
    out = output_box(f.domain, k.family) if out is None else out
    if _is_identity_kernel(k) and _shares_lattice(f.domain, out):
        v, s = _convolution_sums(f, k, out)
    else:
        v, s = _kernel_sums(f, k, out.points(), threads)
    return KernelOutput(GridFunction(out, v.reshape(out.shape)), GridFunction(out, s.reshape(out.shape)))


def apply_T(f: GridFunction, k: KernelSpec, out: DomainBox | None = None, threads: int = 1) -> GridFunction:
    return apply_T_full(f, k, out, threads).field


def apply_T_at(f: GridFunction, k: KernelSpec, x: np.ndarray, threads: int = 1) -> np.ndarray:
    """``T f`` at arbitrary points ``x`` of shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    v, _ = _kernel_sums(f, k, x, threads)
    return v.reshape(x.shape[:-1]) if x.ndim > 1 else v.reshape(())


def apply_TA(
    f: GridFunction, A: np.ndarray, alpha: float, out: DomainBox | None = None, threads: int = 1
) -> GridFunction:
    """``T_A f(x) = sum_y |x - Ay|^(alpha - n) f(y) dy``, the one-matrix case."""
    n = f.domain.n
    if not 0.0 < alpha < n:
        raise ValueError(f"need 0 < alpha < n, got alpha = {alpha}")
    k = KernelSpec.from_alphas([np.asarray(A, dtype=float).reshape(n, n)], [n - float(alpha)])
    return apply_T(f, k, out, threads)


# -- bound sweeps -------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheckReport:
    """Ratios per test function on the base grid and on its 2x refinement."""

    ratios: tuple[float, ...]
    max_ratio: float
    ratios_refined: tuple[float, ...]
    max_ratio_refined: float
    refinement_delta: float
    stable_under_refinement: bool
    skipped_mass_max: float
    kind: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "ratios": list(self.ratios),
            "maxRatio": self.max_ratio,
            "ratiosRefined": list(self.ratios_refined),
            "maxRatioRefined": self.max_ratio_refined,
            "refinementDelta": self.refinement_delta,
            "stableUnderRefinement": self.stable_under_refinement,
            "skippedMassMax": self.skipped_mass_max,
        }


def _validate_sweep(
    tests: Sequence[TestFunction], k: KernelSpec, p: ExponentField, domain: DomainBox
) -> ExponentField:
    if len(tests) == 0:
        raise ValueError("empty test family")
    q = sobolev_exponent(p, k.alpha, k.n).q
    out = output_box(domain, k.family)
    for i, A in enumerate(k.family.mats, start=1):
        for box in (domain, out):
            rep = check_matrix_invariance(p, A, box)
            if not rep.passed:
                raise ValueError(
                    f"p(A_{i} x) != p(x): deviation {rep.max_deviation:.3g} at {list(rep.worst_point)}; "
                    f"the bound cannot hold, see the counterexample module"
                )
    return q


def _ratios(
    tests: Sequence[TestFunction],
    k: KernelSpec,
    p: ExponentField,
    domain: DomainBox,
    measures: Sequence[Callable[[GridFunction], float]],
    threads: int,
) -> tuple[list[list[float]], float]:
    out: list[list[float]] = [[] for _ in measures]
    skipped = 0.0
    for i, t in enumerate(tests):
        f = t.sample(domain) if isinstance(t, TestFunction) else t(domain)
        if f.is_zero():
            raise ValueError(f"test function {i} vanishes on the grid")
        r = apply_T_full(f, k, threads=threads)
        skipped = max(skipped, r.skipped_mass_max)
        nf = luxemburg_norm(f, p)
        for dst, measure in zip(out, measures):
            dst.append(measure(r.field) / nf)
    return out, skipped


def _sweeps(
    kinds: Sequence[str],
    tests: Sequence[TestFunction],
    k: KernelSpec,
    p: ExponentField,
    domain: DomainBox,
    refine: bool,
    threads: int,
) -> list[BoundCheckReport]:
    q = _validate_sweep(tests, k, p, domain)
    table = {
        "strong": lambda g: luxemburg_norm(g, q),
        "weak": lambda g: weak_quasinorm(g, q, weak_levels(g)),
    }
    measures = [table[kd] for kd in kinds]
    base, s0 = _ratios(tests, k, p, domain, measures, threads)
    if refine:
        fine, s1 = _ratios(tests, k, p, domain.refine(2), measures, threads)
    else:
        fine, s1 = [list(b) for b in base], s0
    reports = []
    for kd, b, f in zip(kinds, base, fine):
        m0, m1 = max(b), max(f)
        delta = abs(m1 - m0) / m0
        reports.append(
            BoundCheckReport(tuple(b), m0, tuple(f), m1, delta, bool(delta < REFINE_TOL), max(s0, s1), kd)
        )
    return reports


def strong_bound_sweep(
    tests: Sequence[TestFunction],
    k: KernelSpec,
    p: ExponentField,
    domain: DomainBox,
    refine: bool = True,
    threads: int = 1,
) -> BoundCheckReport:
    """``||T f||_q / ||f||_p`` over the family, on ``domain`` and on its 2x refinement.

    Test functions are closed forms so the refined run samples the same
    functions.  ``p`` must be invariant under every ``A_i`` on the input and
    output boxes.
    """
    return _sweeps(("strong",), tests, k, p, domain, refine, threads)[0]


def weak_levels(g: GridFunction, count: int = WEAK_LEVELS) -> np.ndarray:
    """Log-spaced levels from ``max(g) / 1000`` up to (not including) ``max(g)``."""
    top = float(g.values.max())
    if top <= 0:
        return np.array([1.0])
    return np.geomspace(top * 1e-3, top, count + 1)[:-1]


def weak_bound_sweep(
    tests: Sequence[TestFunction],
    k: KernelSpec,
    p: ExponentField,
    domain: DomainBox,
    refine: bool = True,
    threads: int = 1,
) -> BoundCheckReport:
    """``sup_t t ||1{T f > t}||_q / ||f||_p`` with levels log-spaced over the range of ``T f``."""
    return _sweeps(("weak",), tests, k, p, domain, refine, threads)[0]


def bound_sweeps(
    tests: Sequence[TestFunction],
    k: KernelSpec,
    p: ExponentField,
    domain: DomainBox,
    refine: bool = True,
    threads: int = 1,
) -> tuple[BoundCheckReport, BoundCheckReport]:
    """Strong and weak sweeps sharing one evaluation of ``T f`` per test function."""
    strong, weak = _sweeps(("strong", "weak"), tests, k, p, domain, refine, threads)
    return strong, weak


# -- domination by the fractional maximal function ---------------------------


@dataclass(frozen=True)
class TMReport:
    lhs: float
    rhs: float
    c_empirical: float
    skipped_mass_max: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "cEmpirical": self.c_empirical,
            "skippedMassMax": self.skipped_mass_max,
        }


def tm_domination_check(
    f: GridFunction,
    k: KernelSpec,
    w: GridFunction | Callable[[np.ndarray], np.ndarray],
    p: float,
    m: MaximalConfig = MaximalConfig(),
    threads: int = 1,
) -> TMReport:
    """``int (T f)^p w`` against ``sum_j int (M_alpha f)^p (x) w(A_j x) dx`` on the output box.

    ``w`` is either a grid function on the output box (then ``w o A_j`` is
    interpolated) or a closed form evaluated at ``A_j x`` directly.
    """
    if not 0.0 < p < math.inf:
        raise ValueError(f"need 0 < p < inf, got {p}")
    out = output_box(f.domain, k.family)
    if f.is_zero():
        return TMReport(0.0, 0.0, 0.0, 0.0)
    r = apply_T_full(f, k, out, threads)
    x = out.mesh()
    if isinstance(w, GridFunction):
        if w.domain != out:
            raise ValueError("weight must live on the output box")
        w0 = w.values
        shifted = [compose(w, A).values for A in k.family.mats]
    else:
        w0 = np.asarray(w(x), dtype=float)
        shifted = [np.asarray(w(x @ A.T), dtype=float) for A in k.family.mats]
    if np.any(w0 < 0):
        raise ValueError("weight must be nonnegative")
    mf = frac_maximal(embed(abs(f), out), k.alpha, m).values
    dv = out.cell_volume
    lhs = float(np.sum(np.abs(r.field.values) ** p * w0)) * dv
    mp = mf**p
    rhs = math.fsum(float(np.sum(mp * s)) * dv for s in shifted)
    if rhs == 0.0:
        if lhs > 0.0:
            raise ValueError("right-hand side vanishes while the left-hand side does not")
        return TMReport(lhs, rhs, 0.0, r.skipped_mass_max)
    return TMReport(lhs, rhs, lhs / rhs, r.skipped_mass_max)


@dataclass(frozen=True)
class TMSweepReport:
    c_empirical: tuple[float, ...]
    c_max: float
    c_empirical_refined: tuple[float, ...]
    c_max_refined: float
    drift: float
    skipped_mass_max: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "cEmpirical": list(self.c_empirical),
            "cMax": self.c_max,
            "cEmpiricalRefined": list(self.c_empirical_refined),
            "cMaxRefined": self.c_max_refined,
            "refinementDelta": self.drift,
            "skippedMassMax": self.skipped_mass_max,
        }


def tm_sweep(
    tests: Sequence[TestFunction],
    k: KernelSpec,
    w: Callable[[np.ndarray], np.ndarray],
    p: float,
    domain: DomainBox,
    m: MaximalConfig = MaximalConfig(),
    threads: int = 1,
) -> TMSweepReport:
    """:func:`tm_domination_check` over a family, on ``domain`` and its 2x refinement."""
    if len(tests) == 0:
        raise ValueError("empty test family")
    runs = []
    skipped = 0.0
    for d in (domain, domain.refine(2)):
        cs = []
        for t in tests:
            rep = tm_domination_check(t.sample(d), k, w, p, m, threads)
            skipped = max(skipped, rep.skipped_mass_max)
            cs.append(rep.c_empirical)
        runs.append(cs)
    c0, c1 = max(runs[0]), max(runs[1])
    return TMSweepReport(
        tuple(runs[0]), c0, tuple(runs[1]), c1, abs(c1 - c0) / c0 if c0 > 0 else 0.0, skipped
    )
