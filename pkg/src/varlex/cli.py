"""Command-line experiment harness.

Every subcommand reads one TOML config, validates it completely, runs one
check and writes ``<command>.json`` (plus plot-ready CSV tables) into the
output directory.  Exit status: 0 when the check passes, 2 when it fails,
1 on any error.  Reports hold no timestamps, paths or thread counts, so the
same config and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    build_domain,
    build_exponent,
    build_functions,
    build_kernel,
    build_matrices,
    build_maximal,
    build_tests,
    floats,
    integer,
    load_config,
    number,
)
from .counterexample import build_counterexample, derive_spec, divergence_experiment, necessity_scan
from .exponent import ExponentField, sobolev_exponent
from .grid import DomainBox, GridFunction
from .matrices import compose, lemma8_check, parse_matrix, validate
from .maximal import (
    MaximalConfig,
    RubioConfig,
    estimate_maximal_norm,
    frac_maximal,
    hl_maximal,
    rubio_defrancia,
)
from .norms import luxemburg_norm, modular
from .operators import (
    KernelSpec,
    apply_T_at,
    apply_T_full,
    bound_sweeps,
    output_box,
    resolution_cap,
    strong_bound_sweep,
    tm_sweep,
)
from .weights import (
    DyadicFamily,
    a1_constant,
    a1_implies_apq_check,
    ap_constant,
    apq_constant,
    refinement_profile,
)

__all__ = ["main", "run"]

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
SUMMARY_COLUMNS = (
    "file",
    "command",
    "configHash",
    "seed",
    "resolution",
    "pass",
    "metric",
    "value",
    "skippedMassMax",
    "version",
)


@dataclass
class Outcome:
    """What a subcommand hands back to the harness."""

    result: dict[str, Any]
    passed: bool
    metric: str
    value: float
    resolution: Sequence[int] | None = None
    skipped_mass: float = 0.0
    tables: dict[str, tuple[Sequence[str], list[Sequence[Any]]]] = field(default_factory=dict)


# -- helpers -----------------------------------------------------------------


@contextlib.contextmanager
def anchored(cfg: ExperimentConfig, table: str, key: str | None = None) -> Iterator[None]:
    """Re-raise a library ``ValueError`` as a config error pointing at ``[table]``."""
    try:
        yield
    except ConfigError:
        raise
    except ValueError as e:
        raise cfg.source.error(table, key, str(e)) from None


def _check_cap(cfg: ExperimentConfig, domain: DomainBox, k: KernelSpec, refine: bool) -> None:
    cap = resolution_cap(k)
    top = max(domain.resolution) * (2 if refine else 1)
    if top > cap:
        raise cfg.source.error(
            "domain", "resolution",
            f"operator runs need at most {cap} cells per axis for n = {domain.n}"
            + (" after the 2x refinement" if refine else "")
            + f", got {top}",
        )


def _sobolev(cfg: ExperimentConfig, p: ExponentField, alpha: float, n: int, domain: DomainBox | None = None):
    with anchored(cfg, "exponent"):
        return sobolev_exponent(p, alpha, n, domain)


def _weight_callable(cfg: ExperimentConfig, table: str, desc: Any) -> Callable[[np.ndarray], np.ndarray]:
    """Closed-form weights: ``constant`` (value), ``power`` (exponent, center) or ``radial`` (a, b, center)."""
    if not isinstance(desc, dict):
        raise cfg.source.error(table, "weight", "expected an inline table such as {kind = \"constant\", value = 1}")
    kind = desc.get("kind")
    try:
        if kind == "constant":
            c = float(desc.get("value", 1.0))
            return lambda x: np.full(x.shape[:-1], c)
        center = desc.get("center")
        if kind == "power":
            e = float(desc["exponent"])

            def power(x: np.ndarray) -> np.ndarray:
                c0 = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
                r = np.linalg.norm(x - c0, axis=-1)
                with np.errstate(divide="ignore"):
                    return np.where(r > 0, np.where(r > 0, r, 1.0) ** e, 0.0 if e > 0 else np.inf)

            return power
        if kind == "radial":
            a, b = float(desc["a"]), float(desc["b"])

            def radial(x: np.ndarray) -> np.ndarray:
                c0 = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
                return a + b / (1.0 + np.linalg.norm(x - c0, axis=-1))

            return radial
    except KeyError as e:
        raise cfg.source.error(table, "weight", f"missing key {e.args[0]!r} for weight kind {kind!r}") from None
    raise cfg.source.error(table, "weight", f"unknown weight kind {kind!r}")


def _rubio_setup(cfg: ExperimentConfig, p: ExponentField, domain: DomainBox):
    """Derived exponents on ``domain``, the series settings and the window family."""
    alpha = number(cfg, "rubio", "alpha", 0.0)
    der = _sobolev(cfg, p, alpha, domain.n, domain)
    if der.q_tilde_conj is None:
        raise cfg.source.error(
            "exponent", None, "q/q0 reaches 1 on the domain, so its conjugate exponent is unbounded"
        )
    m = build_maximal(cfg)
    t = cfg.table("rubio")
    with anchored(cfg, "rubio"):
        if "norm_bound" in t:
            nb = number(cfg, "rubio", "norm_bound")
        else:
            est = estimate_maximal_norm(
                der.q_tilde_conj, integer(cfg, "rubio", "probes", 8), domain, cfg.seed, m,
                safety=number(cfg, "rubio", "safety", 2.0),
            )
            nb = max(1.0, est)
        rc = RubioConfig(nb, integer(cfg, "rubio", "K", 20))
    return der, rc, m


def _normalised_h(cfg: ExperimentConfig, domain: DomainBox, qc: ExponentField, count: int) -> list[GridFunction]:
    tests = build_tests(cfg, domain.n, p_plus=qc.p_plus)
    out = []
    for i, t in enumerate(tests[:count]):
        h = t.sample(domain)
        nh = luxemburg_norm(h, qc)
        if nh == 0.0:
            raise cfg.source.error("tests", None, f"test function {i} vanishes on the grid")
        out.append(h * (1.0 / nh))
    return out


def _cells(domain: DomainBox) -> list[int]:
    return list(domain.resolution)


# -- subcommands -------------------------------------------------------------


def cmd_norm(cfg: ExperimentConfig, threads: int) -> Outcome:
    """Norms of ``[[functions]]`` or of the seeded ``[tests]`` family.

    ``[norm]`` may give ``expect`` (one value or one per function) with
    ``rel_tol``; for a constant exponent the classical ``(int |f|^p)^(1/p)``
    is reported as well and, with ``rel_tol``, must match.
    """
    domain = build_domain(cfg)
    p = build_exponent(cfg, domain=domain)
    funcs = build_functions(cfg, domain.n) if "functions" in cfg.data else build_tests(
        cfg, domain.n, p_plus=p.p_plus
    )
    t = cfg.table("norm", required=False)
    tol = t.get("rel_tol")
    expect = t.get("expect")
    if expect is not None:
        expect = floats(cfg, "norm", "expect", n=len(funcs) if isinstance(expect, list) else None)
        expect = expect * len(funcs) if len(expect) == 1 else expect
    ok = True
    rows = []
    out = []
    for i, fn in enumerate(funcs):
        f = fn.sample(domain)
        nf = luxemburg_norm(f, p)
        at = float(modular(f * (1.0 / nf), p)) if nf > 0 else 0.0
        entry: dict[str, Any] = {"function": fn.describe(), "norm": nf, "modularAtNorm": at}
        ref = None
        if p.kind == "constant":
            e = p.p_minus
            ref = float(np.sum(np.abs(f.values) ** e) * domain.cell_volume) ** (1.0 / e)
            entry["classical"] = ref
        if expect is not None:
            ref = expect[i]
            entry["expected"] = ref
        err = math.nan
        if ref is not None:
            err = abs(nf - ref) / abs(ref) if ref else abs(nf)
            entry["relativeError"] = err
            if tol is not None:
                ok = ok and err <= float(tol)
        ok = ok and math.isfinite(nf)
        out.append(entry)
        rows.append([i, fn.kind, nf, at, err])
    worst = max((r.get("relativeError", 0.0) for r in out), default=0.0)
    return Outcome(
        {"exponent": p.describe(), "relTol": tol, "norms": out}, ok,
        "maxRelativeError" if any("relativeError" in r for r in out) else "maxNorm",
        worst if any("relativeError" in r for r in out) else max(r["norm"] for r in out),
        _cells(domain),
        tables={"norms": (("index", "kind", "norm", "modularAtNorm", "relativeError"), rows)},
    )


def cmd_maximal(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    funcs = build_functions(cfg, domain.n)
    m = build_maximal(cfg)
    alphas = floats(cfg, "maximal", "alphas", [0.0])
    for a in alphas:
        if not 0.0 <= a < domain.n:
            raise cfg.source.error("maximal", "alphas", f"need 0 <= alpha < n, got {a}")
    pts = domain.points()
    header = [f"x{i + 1}" for i in range(domain.n)] + ["f"] + [f"M_alpha={a!r}" for a in alphas]
    result = []
    tables = {}
    top = 0.0
    for i, t in enumerate(funcs):
        f = t.sample(domain)
        cols = [f.values.ravel()]
        for a in alphas:
            g = hl_maximal(f, m) if a == 0.0 else frac_maximal(f, a, m)
            cols.append(g.values.ravel())
            result.append({"function": i, "alpha": a, "max": g.max(), "min": g.min()})
            top = max(top, g.max())
        rows = [list(p) + [c[j] for c in cols] for j, p in enumerate(pts)]
        tables[f"field_{i}"] = (header, rows)
    return Outcome(
        {"window": {"shape": m.shape, "maxWindow": m.max_window}, "fields": result},
        all(math.isfinite(r["max"]) for r in result), "maxValue", top, _cells(domain), tables=tables,
    )


def cmd_rubio(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    p = build_exponent(cfg, domain=domain)
    der, rc, m = _rubio_setup(cfg, p, domain)
    qc = der.q_tilde_conj
    mats = build_matrices(cfg, "rubio", domain.n) if (
        "matrices" in cfg.table("rubio") or "powers_of" in cfg.table("rubio")
    ) else [np.eye(domain.n)]
    with anchored(cfg, "rubio", "matrices"):
        fam = validate(mats)
    D = max(1.0 / abs(d) for d in fam.dets)
    bound_b = 2.0 * D ** (1.0 / qc.p_minus) + 0.05
    hs = _normalised_h(cfg, domain, qc, integer(cfg, "rubio", "count", 10))
    per_h = []
    ok = True
    for i, h in enumerate(hs):
        r = rubio_defrancia(h, rc, m)
        gap = float(np.min(r.field.values - np.abs(h.values)))
        norms = [luxemburg_norm(compose(r.field, A), qc) for A in fam.mats]
        rv = r.field.values
        mr = hl_maximal(r.field, m).values
        pos = rv > 0
        ratio = float(np.max(mr[pos] / rv[pos]))
        tail = r.a1_tail()
        bound_c = 2.0 * rc.norm_bound + tail + 0.1
        a, b, c = gap >= 0.0, max(norms) <= bound_b, ratio <= bound_c
        ok = ok and a and b and c
        per_h.append({
            "index": i,
            "a": {"minGap": gap, "pass": a},
            "b": {"norms": norms, "bound": bound_b, "pass": b},
            "c": {"a1Ratio": ratio, "truncationTail": tail, "bound": bound_c, "pass": c},
        })
    return Outcome(
        {
            "normBound": rc.norm_bound, "K": rc.K, "q0": der.q0,
            "qTildeConjMinus": qc.p_minus, "D": D, "matrices": fam.describe(), "h": per_h,
        },
        ok, "maxA1Ratio", max(e["c"]["a1Ratio"] for e in per_h), _cells(domain),
    )


def _rubio_weight(cfg: ExperimentConfig, p: ExponentField) -> Callable[[DomainBox], GridFunction]:
    """``(R h)^(1/q0)`` for the first test function, rebuilt on each grid."""

    def make(domain: DomainBox) -> GridFunction:
        der, rc, m = _rubio_setup(cfg, p, domain)
        h = _normalised_h(cfg, domain, der.q_tilde_conj, 1)[0]
        return rubio_defrancia(h, rc, m).field ** (1.0 / der.q0)

    return make


def _weight_fn(cfg: ExperimentConfig, desc: Any) -> Callable[[DomainBox], GridFunction]:
    if isinstance(desc, dict) and desc.get("kind") == "rubio":
        return _rubio_weight(cfg, build_exponent(cfg))
    fn = _weight_callable(cfg, "weights", desc)
    return lambda d: GridFunction(d, fn(d.mesh()))


def cmd_weights(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    t = cfg.table("weights")
    weight = _weight_fn(cfg, t.get("weight", {"kind": "constant", "value": 1.0}))
    p = number(cfg, "weights", "p", 2.0)
    q = number(cfg, "weights", "q", p)
    depth = integer(cfg, "weights", "depth", int(math.log2(min(domain.resolution))))
    estimators = list(t.get("estimators", ["ap", "apq", "a1"]))
    m = build_maximal(cfg)
    table: dict[str, Callable[[GridFunction, DyadicFamily], Any]] = {
        "ap": lambda w, fam: ap_constant(w, p, fam),
        "apq": lambda w, fam: apq_constant(w, p, q, fam),
        "a1": lambda w, fam: a1_constant(w, fam, m),
    }
    for e in estimators:
        if e not in table:
            raise cfg.source.error("weights", "estimators", f"unknown estimator {e!r}")
    with anchored(cfg, "weights"):
        fam = DyadicFamily(domain, depth)
        w = weight(domain)
        reports = {e: table[e](w, fam) for e in estimators}
        implication = (
            a1_implies_apq_check(w, p, q, fam, m, t.get("a1_limit")) if {"a1", "apq"} <= set(estimators) else None
        )
        depths = t.get("profile_depths")
        profiles = {}
        if depths is not None:
            for e in estimators:
                profiles[e] = refinement_profile(weight, table[e], domain, depths)
    result: dict[str, Any] = {"p": p, "q": q, "depth": depth}
    for e, rep in reports.items():
        result[e] = {**rep.to_dict(), "profile": list(rep.profile)}
    if implication is not None:
        result["implication"] = implication.to_dict()
    ok = implication is None or implication.passed
    checks = []
    expect = t.get("expect", {})
    max_drift = t.get("max_drift")
    for e in estimators:
        divergent = reports[e].divergent or not math.isfinite(reports[e].constant)
        if e in profiles:
            pr = profiles[e]
            result[e]["depthProfile"] = {**pr.to_dict(), "drift": pr.drift()}
            divergent = divergent or pr.divergent
            if max_drift is not None:
                good = not pr.divergent and pr.drift() <= float(max_drift)
                checks.append({"estimator": e, "check": "drift", "pass": good})
                ok = ok and good
        if e in expect:
            want = expect[e]
            if want not in ("finite", "divergent"):
                raise cfg.source.error("weights", "expect", f"expected 'finite' or 'divergent', got {want!r}")
            good = divergent == (want == "divergent")
            checks.append({"estimator": e, "check": want, "pass": good})
            ok = ok and good
    result["checks"] = checks
    first = estimators[0]
    return Outcome(result, ok, f"{first}Constant", reports[first].constant, _cells(domain))


def cmd_tfrac(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    funcs = build_functions(cfg, domain.n)
    k = build_kernel(cfg, domain.n)
    t = cfg.table("tfrac", required=False)
    _check_cap(cfg, domain, k, False)
    out = output_box(domain, k.family)
    tables = {}
    skipped = 0.0
    fields = []
    if t.get("field", True):
        for i, fn in enumerate(funcs):
            r = apply_T_full(fn.sample(domain), k, out, threads)
            skipped = max(skipped, r.skipped_mass_max)
            rows = [list(pt) + [v, s] for pt, v, s in zip(out.points(), r.field.values.ravel(), r.skipped.values.ravel())]
            tables[f"field_{i}"] = ([f"x{j + 1}" for j in range(out.n)] + ["Tf", "skippedMass"], rows)
            fields.append({"function": i, "max": r.field.max(), "skippedMassMax": r.skipped_mass_max})
    result: dict[str, Any] = {"kernel": k.describe(), "outputBox": out.to_dict(), "fields": fields}
    ok = all(math.isfinite(f["max"]) for f in fields)
    metric, value = "maxTf", max((f["max"] for f in fields), default=0.0)
    if "points" in t:
        pts = np.asarray(t["points"], dtype=float).reshape(-1, domain.n)
        res = [int(r) for r in t.get("resolutions", [domain.resolution[0]])]
        ref = t.get("reference")
        conv = []
        for i, fn in enumerate(funcs):
            vals = []
            for r in res:
                d = domain.with_resolution((r,) * domain.n)
                with anchored(cfg, "tfrac", "resolutions"):
                    vals.append(apply_T_at(fn.sample(d), k, pts, threads).reshape(-1).tolist())
            entry: dict[str, Any] = {"function": i, "resolutions": res, "values": vals}
            v = np.asarray(vals)
            if ref is not None:
                refv = np.asarray(ref, dtype=float).reshape(-1)
                err = np.abs(v - refv) / np.abs(refv)
            else:
                err = np.abs(np.diff(v, axis=0))
            with np.errstate(divide="ignore", invalid="ignore"):
                orders = np.log2(err[:-1] / err[1:]) if len(err) > 1 else np.zeros((0, pts.shape[0]))
            entry["errors"] = err.tolist()
            entry["orders"] = orders.tolist()
            entry["minOrder"] = float(orders.min()) if orders.size else math.nan
            if ref is not None:
                entry["relativeError"] = err[-1].tolist()
                if "rel_tol" in t:
                    ok = ok and bool(np.all(err[-1] <= float(t["rel_tol"])))
                metric, value = "relativeError", float(err[-1].max())
            if "min_order" in t and orders.size:
                ok = ok and entry["minOrder"] >= float(t["min_order"])
            conv.append(entry)
        result["points"] = pts.tolist()
        result["convergence"] = conv
    return Outcome(result, ok, metric, value, _cells(domain), skipped, tables)


def _sweep_setup(cfg: ExperimentConfig):
    domain = build_domain(cfg)
    p = build_exponent(cfg, domain=domain)
    k = build_kernel(cfg, domain.n)
    _sobolev(cfg, p, k.alpha, domain.n)
    refine = bool(cfg.table("sweep", required=False).get("refine", True))
    _check_cap(cfg, domain, k, refine)
    tests = build_tests(cfg, domain.n, p_plus=p.p_plus)
    return domain, p, k, refine, tests


def _ratio_rows(*reports) -> tuple[Sequence[str], list[Sequence[Any]]]:
    cols = ["index"]
    series = []
    for rep in reports:
        cols += [f"{rep.kind}", f"{rep.kind}Refined"]
        series += [rep.ratios, rep.ratios_refined]
    return cols, [[i] + [s[i] for s in series] for i in range(len(series[0]))]


def cmd_verify_strong(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain, p, k, refine, tests = _sweep_setup(cfg)
    with anchored(cfg, "exponent"):
        rep = strong_bound_sweep(tests, k, p, domain, refine, threads)
    ok = bool(math.isfinite(rep.max_ratio) and rep.stable_under_refinement)
    return Outcome(
        {"kernel": k.describe(), "exponent": p.describe(), **rep.to_dict()},
        ok, "maxRatio", rep.max_ratio, _cells(domain), rep.skipped_mass_max,
        {"ratios": _ratio_rows(rep)},
    )


def cmd_verify_weak(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain, p, k, refine, tests = _sweep_setup(cfg)
    with anchored(cfg, "exponent"):
        strong, weak = bound_sweeps(tests, k, p, domain, refine, threads)
    dominated = [w <= s for w, s in zip(weak.ratios + weak.ratios_refined, strong.ratios + strong.ratios_refined)]
    ok = bool(math.isfinite(weak.max_ratio) and weak.stable_under_refinement and all(dominated))
    return Outcome(
        {
            "kernel": k.describe(), "exponent": p.describe(), **weak.to_dict(),
            "strong": strong.to_dict(), "weakLeStrong": all(dominated),
        },
        ok, "maxRatio", weak.max_ratio, _cells(domain), max(weak.skipped_mass_max, strong.skipped_mass_max),
        {"ratios": _ratio_rows(weak, strong)},
    )


def cmd_tm_check(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    k = build_kernel(cfg, domain.n)
    _check_cap(cfg, domain, k, True)
    tests = build_tests(cfg, domain.n)
    t = cfg.table("tm")
    p = number(cfg, "tm", "p", 2.0)
    m = build_maximal(cfg)
    weights = t.get("weights", [{"kind": "constant", "value": 1.0}])
    limit = float(t.get("max_drift", 0.2))
    runs = []
    ok = True
    skipped = 0.0
    worst = 0.0
    for desc in weights:
        w = _weight_callable(cfg, "tm", desc)
        with anchored(cfg, "tm"):
            rep = tm_sweep(tests, k, w, p, domain, m, threads)
        good = math.isfinite(rep.c_max) and math.isfinite(rep.c_max_refined) and rep.drift < limit
        ok = ok and good
        skipped = max(skipped, rep.skipped_mass_max)
        worst = max(worst, rep.drift)
        runs.append({"weight": desc, **rep.to_dict(), "pass": good})
    return Outcome(
        {"kernel": k.describe(), "p": p, "maxDrift": limit, "runs": runs},
        ok, "refinementDelta", worst, _cells(domain), skipped,
    )


def cmd_lemma8(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    mats = build_matrices(cfg, "lemma8", domain.n)
    slack = number(cfg, "lemma8", "slack", 0.15)
    m = build_maximal(cfg) if "maximal" in cfg.data else None
    tests = build_tests(cfg, domain.n)
    runs = []
    rows = []
    for j, A in enumerate(mats):
        for i, t in enumerate(tests):
            with anchored(cfg, "lemma8", "matrices"):
                rep = lemma8_check(t.sample(domain), A, m, slack)
            runs.append({
                "matrix": A.tolist(), "function": i, "cEmpirical": rep.c_empirical,
                "cTheory": rep.c_theory, "pass": rep.passed, "worstPoint": list(rep.worst_point),
            })
            rows.append([j, i, rep.c_empirical, rep.c_theory, rep.passed])
    worst = max(r["cEmpirical"] / r["cTheory"] for r in runs)
    return Outcome(
        {"slack": slack, "window": "ball" if m is None and domain.n == 2 else (m.shape if m else "box"), "runs": runs},
        all(r["pass"] for r in runs), "maxRatioToTheory", worst, _cells(domain),
        tables={"lemma8": (("matrix", "function", "cEmpirical", "cTheory", "pass"), rows)},
    )


def cmd_counterexample(cfg: ExperimentConfig, threads: int) -> Outcome:
    domain = build_domain(cfg)
    p = build_exponent(cfg, domain=domain)
    t = cfg.table("counterexample")
    if "A" not in t or "y0" not in t:
        raise cfg.source.error("counterexample", None, "need the matrix 'A' and the point 'y0'")
    with anchored(cfg, "counterexample", "A"):
        A = parse_matrix(t["A"], domain.n)
    y0 = floats(cfg, "counterexample", "y0", n=domain.n)
    alpha = number(cfg, "counterexample", "alpha")
    with anchored(cfg, "counterexample"):
        spec = derive_spec(p, A, y0, alpha, domain.n, number(cfg, "counterexample", "r0", 1.0))
    with anchored(cfg, "domain"):
        f = build_counterexample(spec, domain, bool(t.get("check", True)))
    if "cutoffs" in t:
        cuts = floats(cfg, "counterexample", "cutoffs")
    else:
        cuts = tuple(spec.eps / d for d in floats(cfg, "counterexample", "cutoff_divisors", [4, 8, 16, 32]))
    with anchored(cfg, "counterexample", "cutoffs"):
        rep = divergence_experiment(spec, f, cuts, threads=threads)
    result: dict[str, Any] = {"spec": spec.to_dict(), **rep.to_dict(), "skippedCells": rep.skipped_cells}
    rows = [["main", c, v] for c, v in zip(rep.cutoffs, rep.modulars)]
    if "control_p" in t:
        pc = ExponentField.constant(number(cfg, "counterexample", "control_p"))
        with anchored(cfg, "counterexample", "control_p"):
            ctrl = divergence_experiment(spec, f, cuts, p=pc, threads=threads)
        result["control"] = {
            "p": pc.describe(), "cutoffs": list(ctrl.cutoffs), "modulars": list(ctrl.modulars),
            "slope": ctrl.slope, "slopeNonnegative": ctrl.slope >= 0.0,
        }
        rows += [["control", c, v] for c, v in zip(ctrl.cutoffs, ctrl.modulars)]
    return Outcome(
        result, rep.passed, "slope", rep.slope, _cells(domain),
        tables={"modulars": (("run", "cutoff", "modular"), rows)},
    )


def cmd_necessity(cfg: ExperimentConfig, threads: int) -> Outcome:
    t = cfg.table("necessity")
    if "A" not in t:
        raise cfg.source.error("necessity", None, "need the matrix 'A'")
    with anchored(cfg, "necessity", "A"):
        A = parse_matrix(t["A"])
    n = A.shape[0]
    lo, hi = floats(cfg, "necessity", "bounds", [-2.0, 2.0], 2)
    with anchored(cfg, "necessity", "bounds"):
        box = DomainBox.cube(lo, hi, 64, n)
    p = build_exponent(cfg, domain=box)
    with anchored(cfg, "necessity"):
        rep = necessity_scan(
            p, A, integer(cfg, "necessity", "N"), integer(cfg, "necessity", "samples", 4096),
            (lo, hi), cfg.seed, number(cfg, "necessity", "tol", 1e-9),
        )
    return Outcome(
        {"exponent": p.describe(), "A": A.tolist(), **rep.to_dict()},
        rep.violations == 0, "violations", rep.violations,
    )


COMMANDS: dict[str, tuple[Callable[[ExperimentConfig, int], Outcome], str]] = {
    "norm": (cmd_norm, "Luxemburg norms of the declared functions"),
    "maximal": (cmd_maximal, "maximal and fractional maximal fields"),
    "rubio": (cmd_rubio, "Rubio de Francia iteration and its three properties"),
    "weights": (cmd_weights, "A_1, A_p and A(p,q) constants over dyadic cubes"),
    "tfrac": (cmd_tfrac, "matrix-kernel operator fields and point convergence"),
    "verify-strong": (cmd_verify_strong, "strong-type ratio sweep under refinement"),
    "verify-weak": (cmd_verify_weak, "weak-type ratio sweep under refinement"),
    "tm-check": (cmd_tm_check, "weighted domination by the fractional maximal function"),
    "lemma8": (cmd_lemma8, "maximal function under a linear change of variables"),
    "counterexample": (cmd_counterexample, "spike counterexample and its divergence slope"),
    "necessity": (cmd_necessity, "scan p(Ay) = p(y) for a periodic matrix"),
}


# -- output ------------------------------------------------------------------


def _clean(o: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        v = float(o)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if o is None or isinstance(o, str):
        return o
    return str(o)


def dumps(report: dict[str, Any]) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: list[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def run(command: str, cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    """Run one subcommand and write its report; returns the exit code."""
    fn, _ = COMMANDS[command]
    o = fn(cfg, threads)
    report = {
        "command": command,
        "version": __version__,
        "configHash": cfg.hash,
        "seed": cfg.seed,
        "resolution": None if o.resolution is None else list(o.resolution),
        "skippedMass": {"max": o.skipped_mass},
        "pass": bool(o.passed),
        "summary": {"metric": o.metric, "value": o.value},
        "result": o.result,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}.json").write_text(dumps(report))
    for name, (header, rows) in o.tables.items():
        write_csv(out / f"{command}_{name}.csv", header, rows)
    return EXIT_PASS if o.passed else EXIT_FAIL


def merge_reports(inputs: Sequence[Path], out: Path) -> Path:
    """Collect report JSONs (files or directories) into ``summary.csv`` with fixed columns."""
    files: list[Path] = []
    for p in inputs:
        files += sorted(p.glob("*.json")) if p.is_dir() else [p]
    if not files:
        raise ValueError("no report files found")
    rows = []
    for f in files:
        try:
            r = json.loads(f.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ValueError(f"{f}: not a readable report: {e}") from None
        if not isinstance(r, dict) or "command" not in r:
            raise ValueError(f"{f}: not a varlex report")
        res = r.get("resolution")
        rows.append([
            f.name, r["command"], r.get("configHash", ""), r.get("seed", ""),
            "x".join(str(v) for v in res) if res else "",
            r.get("pass", ""), r.get("summary", {}).get("metric", ""), r.get("summary", {}).get("value", ""),
            r.get("skippedMass", {}).get("max", ""), r.get("version", ""),
        ])
    out.mkdir(parents=True, exist_ok=True)
    dest = out / "summary.csv"
    write_csv(dest, SUMMARY_COLUMNS, rows)
    return dest


# -- entry point --------------------------------------------------------------


def _threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("VARLEX_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"VARLEX_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise ValueError(f"thread count must be >= 1, got {value}")
    return value


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varlex", description="Variable exponent operator experiments.")
    ap.add_argument("--version", action="version", version=f"varlex {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("varlex-out"), help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: $VARLEX_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        sp.add_argument("--config", type=Path, required=True, help="TOML experiment file")
        sp.add_argument("--seed", type=_u64, default=None, help="override the config seed")
        sp.add_argument("--resolution", type=int, default=None, help="override the grid resolution per axis")
    rp = sub.add_parser("report", parents=[common], help="merge report JSONs into summary.csv",
                        description="Merge report JSONs into one CSV summary with fixed columns.")
    rp.add_argument("inputs", nargs="*", type=Path, help="report files or directories (default: --out)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _threads(args.threads)
        if args.command == "report":
            dest = merge_reports(args.inputs or [args.out], args.out)
            print(dest)
            return EXIT_PASS
        cfg = load_config(args.config, args.seed, args.resolution, threads)
        code = run(args.command, cfg, args.out, threads)
        print(f"{args.command}: {'pass' if code == EXIT_PASS else 'FAIL'} -> {args.out / (args.command + '.json')}")
        return code
    except ConfigError as e:
        print(f"varlex: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError) as e:
        print(f"varlex: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
