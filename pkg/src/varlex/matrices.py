"""Matrix families A_1..A_m, composition f(Ax), and the dilation lemma check."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .grid import GridFunction, interpolate
from .maximal import MaximalConfig, hl_maximal

__all__ = [
    "Lemma8Report",
    "MatrixFamily",
    "compose",
    "diag",
    "lemma8_check",
    "parse_matrix",
    "reflection",
    "rotation",
    "spectral_norm",
    "validate",
]

SINGULAR_RTOL = 1e-12


def _snap(a: np.ndarray) -> np.ndarray:
    # cos(pi/2) is 6e-17, not 0; snapping keeps quarter turns exact grid permutations
    r = np.round(a)
    return np.where(np.abs(a - r) < 1e-15, r, a)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return _snap(np.array([[c, -s], [s, c]]))


def diag(*entries: float) -> np.ndarray:
    return np.diag(np.asarray(entries, dtype=float))


def reflection(axis: int, n: int = 2) -> np.ndarray:
    m = np.eye(n)
    m[axis, axis] = -1.0
    return m


def parse_matrix(spec: Any, n: int | None = None) -> np.ndarray:
    """Matrix from a config value.

    Accepts a row-major nested list, a scalar (1x1), or a single-key table
    ``{rotation = theta}``, ``{rotation_pi = t}`` (angle ``t * pi``),
    ``{diag = [..]}``, ``{reflection = axis}``,
    ``{identity = n}``, ``{scale = c}`` (``c I``, needs ``n``).
    """
    if isinstance(spec, dict):
        if len(spec) != 1:
            raise ValueError(f"matrix table must have exactly one key, got {sorted(spec)}")
        (key, val), = spec.items()
        if key == "rotation":
            return rotation(float(val))
        if key == "rotation_pi":
            return rotation(float(val) * np.pi)
        if key == "diag":
            return diag(*val)
        if key == "reflection":
            return reflection(int(val), n or 2)
        if key == "identity":
            return np.eye(int(val))
        if key == "scale":
            if n is None:
                raise ValueError("scale matrix needs the dimension")
            return float(val) * np.eye(n)
        raise ValueError(f"unknown matrix form {key!r}")
    a = np.atleast_2d(np.asarray(spec, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    return a


def spectral_norm(A: np.ndarray, iterations: int = 200, tol: float = 1e-12) -> float:
    """``sup_{|y|=1} |Ay|`` by power iteration on ``A^T A``.

    Stops when the eigen-residual ``|Bv - lam v|`` drops below ``tol lam``.
    The Rayleigh quotient never exceeds the top eigenvalue, so when the two
    largest singular values nearly coincide and the iteration budget runs
    out, the result is a slight underestimate.
    """
    A = np.asarray(A, dtype=float)
    B = A.T @ A
    n = B.shape[0]
    v = np.array([1.0, (math.sqrt(5) - 1) / 2, 0.3, 0.7][:n]) if n <= 4 else np.ones(n)
    v = v / np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        w = B @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        lam = float(v @ w) / float(v @ v)
        if float(np.linalg.norm(w - lam * v)) <= tol * max(lam, 1e-300):
            break
        v = w / nw
    return math.sqrt(max(lam, 0.0))


def _is_singular(A: np.ndarray) -> bool:
    scale = max(float(np.abs(A).max()), 1e-300)
    return abs(float(np.linalg.det(A))) <= SINGULAR_RTOL * scale ** A.shape[0]


@dataclass(frozen=True, eq=False)
class MatrixFamily:
    mats: tuple[np.ndarray, ...]
    norms: tuple[float, ...]
    dets: tuple[float, ...]
    D: float
    C: float

    @property
    def n(self) -> int:
        return self.mats[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.mats)

    @property
    def max_norm(self) -> float:
        return max(self.norms)

    def describe(self) -> dict[str, Any]:
        return {
            "matrices": [a.tolist() for a in self.mats],
            "norms": list(self.norms),
            "dets": list(self.dets),
            "D": self.D,
            "C": self.C,
        }


def validate(mats: Sequence[np.ndarray]) -> MatrixFamily:
    """Check the standing hypotheses and cache norms and determinants.

    Every ``A_i`` and every difference ``A_i - A_j`` (``i != j``) must be
    invertible.  ``D = max |det A_j^-1|`` and ``C = min |det A_j|``.
    """
    if not mats:
        raise ValueError("empty matrix family")
    arrs = tuple(np.array(np.atleast_2d(a), dtype=float) for a in mats)
    n = arrs[0].shape[0]
    for i, a in enumerate(arrs, start=1):
        if a.shape != (n, n):
            raise ValueError(f"A_{i} has shape {a.shape}, expected ({n}, {n})")
        if _is_singular(a):
            raise ValueError(f"A_{i} is singular")
    for i in range(len(arrs)):
        for j in range(i + 1, len(arrs)):
            if _is_singular(arrs[i] - arrs[j]):
                raise ValueError(f"A_{i + 1} - A_{j + 1} is singular")
    for a in arrs:
        a.flags.writeable = False
    dets = tuple(float(np.linalg.det(a)) for a in arrs)
    C = min(abs(d) for d in dets)
    D = max(1.0 / abs(d) for d in dets)
    return MatrixFamily(arrs, tuple(spectral_norm(a) for a in arrs), dets, D, C)


def compose(f: GridFunction, A: np.ndarray) -> GridFunction:
    """``x -> f(Ax)`` at the midpoints, by multilinear interpolation; 0 off the domain."""
    A = np.asarray(A, dtype=float).reshape(f.domain.n, f.domain.n)
    if _is_singular(A):
        raise ValueError("matrix is singular")
    x = f.domain.mesh()
    return f.with_values(interpolate(f, x @ A.T, fill=0.0))


@dataclass(frozen=True)
class Lemma8Report:
    c_empirical: float
    c_theory: float
    grid_slack: float
    passed: bool
    worst_point: tuple[float, ...]


def lemma8_check(
    f: GridFunction,
    A: np.ndarray,
    m: MaximalConfig | None = None,
    grid_slack: float = 0.15,
) -> Lemma8Report:
    """Compare ``M(f o A)(x)`` with ``c (Mf)(Ax)``, ``c = |A|^n |det A^-1|``.

    Only midpoints with ``Ax`` inside the domain are compared; elsewhere
    ``(Mf)(Ax)`` is not available on the truncated grid.  The default
    window family is discs in 2D: the estimate is about balls, and square
    windows are not rotation invariant (a square turned by pi/4 needs a
    twice larger axis-aligned square), which the slack cannot absorb.
    """
    d = f.domain
    if m is None:
        m = MaximalConfig(shape="ball")
    A = np.asarray(A, dtype=float).reshape(d.n, d.n)
    if _is_singular(A):
        raise ValueError("matrix is singular")
    lhs = hl_maximal(compose(f, A), m).values
    Mf = hl_maximal(f, m)
    x = d.mesh()
    ax = x @ A.T
    rhs = interpolate(Mf, ax, fill=np.nan)
    ok = d.contains(ax)
    ratio = np.where(ok, lhs / (np.where(ok, rhs, 1.0) + np.finfo(float).eps), -np.inf)
    k = np.unravel_index(int(np.argmax(ratio)), d.shape)
    c_emp = float(ratio[k])
    c_th = spectral_norm(A) ** d.n / abs(float(np.linalg.det(A)))
    return Lemma8Report(
        c_emp, c_th, grid_slack, c_emp <= c_th * (1 + grid_slack), tuple(float(v) for v in x[k])
    )
