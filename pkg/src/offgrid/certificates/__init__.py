"""Dual certificates: pre-certificates, golfing, nondegeneracy checks and sample bounds."""
from .bounds import predicted_sample_counts, sample_count_terms
from .golfing import GolfingConfig, GolfingTrace, golfing_certificate, golfing_config, trace_soundness
from .interpolation import (CertificateFunction, IllConditionedError, InterpolationSystem,
                            build_pre_certificate, certificate_samples_csv, empirical_matrix,
                            gamma_matrix, interpolation_errors, limit_matrix, make_system, psi,
                            system_from_measure)
from .nondegeneracy import NondegeneracyReport, heuristic_lattice, verify_nondegeneracy

__all__ = [
    "CertificateFunction", "GolfingConfig", "GolfingTrace", "IllConditionedError",
    "InterpolationSystem", "NondegeneracyReport", "build_pre_certificate",
    "certificate_samples_csv", "empirical_matrix", "gamma_matrix", "golfing_certificate",
    "golfing_config", "heuristic_lattice", "interpolation_errors", "limit_matrix",
    "make_system", "predicted_sample_counts", "psi", "sample_count_terms",
    "system_from_measure", "trace_soundness", "verify_nondegeneracy",
]
