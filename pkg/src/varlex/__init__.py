"""Numerical toolkit for fractional integrals with matrix kernels on variable exponent spaces."""

from __future__ import annotations

__version__ = "0.1.0"

from .exponent import ExponentField, check_log_holder, check_matrix_invariance, conjugate, sobolev_exponent
from .grid import Ball, Box, DomainBox, GridFunction, indicator, integrate, interpolate, pointwise_map, sample
from .matrices import compose, diag, lemma8_check, parse_matrix, reflection, rotation, spectral_norm, validate
from .maximal import (
    MaximalConfig,
    RubioConfig,
    estimate_maximal_norm,
    frac_maximal,
    hl_maximal,
    hl_maximal_bruteforce,
    iterate_maximal,
    rubio_defrancia,
)
from .norms import luxemburg_norm, modular, weak_quasinorm
from .operators import (
    KernelSpec,
    apply_T,
    apply_T_at,
    apply_T_full,
    apply_TA,
    bound_sweeps,
    strong_bound_sweep,
    tm_domination_check,
    tm_sweep,
    weak_bound_sweep,
)
from .probes import TestFunction, test_family
from .weights import DyadicFamily, a1_constant, a1_implies_apq_check, ap_constant, apq_constant, refinement_profile
from .counterexample import (
    build_counterexample,
    derive_spec,
    divergence_experiment,
    necessity_scan,
    worked_exponent,
)

__all__ = [
    "Ball",
    "Box",
    "DomainBox",
    "DyadicFamily",
    "ExponentField",
    "GridFunction",
    "KernelSpec",
    "MaximalConfig",
    "RubioConfig",
    "TestFunction",
    "__version__",
    "a1_constant",
    "a1_implies_apq_check",
    "ap_constant",
    "apply_T",
    "apply_TA",
    "apply_T_at",
    "apply_T_full",
    "apq_constant",
    "bound_sweeps",
    "build_counterexample",
    "check_log_holder",
    "check_matrix_invariance",
    "compose",
    "conjugate",
    "derive_spec",
    "diag",
    "divergence_experiment",
    "estimate_maximal_norm",
    "frac_maximal",
    "hl_maximal",
    "hl_maximal_bruteforce",
    "indicator",
    "integrate",
    "interpolate",
    "iterate_maximal",
    "lemma8_check",
    "luxemburg_norm",
    "modular",
    "necessity_scan",
    "parse_matrix",
    "pointwise_map",
    "reflection",
    "refinement_profile",
    "rotation",
    "rubio_defrancia",
    "sample",
    "sobolev_exponent",
    "spectral_norm",
    "strong_bound_sweep",
    "test_family",
    "tm_domination_check",
    "tm_sweep",
    "validate",
    "weak_bound_sweep",
    "weak_quasinorm",
    "worked_exponent",
]
