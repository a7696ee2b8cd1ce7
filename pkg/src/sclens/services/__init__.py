"""Numerical services: one module per operation family, plus the experiment drivers."""

from .geometry import build_metric, conjugated_operator, laplace_beltrami, principal_symbol
from .geodesic_flow import flow, nontrapping_probe, preimage_measure, refocusing_scan
from .phase_space import fbi_adjoint, fbi_transform, synthesize_wavepacket, truncate_to_region
from .spectral import heat_lp_project, sobolev_norm, weyl_quantize
from .propagate import GeneratorFactory, metric_propagate, nls_step, picard_iterate, scattering_comparison
from .analysis import (
    fit_decay_slope, greedy_profile_extract, inverse_strichartz_witness, local_smoothing_functional,
    morawetz_report, bourgain_morawetz_ratio,
)
from .experiments import BaseExperiment, ExperimentFactory, run_experiment

__all__ = [
    # Geometry
    "build_metric", "conjugated_operator", "laplace_beltrami", "principal_symbol",
    # Geodesic flow
    "flow", "nontrapping_probe", "preimage_measure", "refocusing_scan",
    # Phase space
    "fbi_adjoint", "fbi_transform", "synthesize_wavepacket", "truncate_to_region",
    # Spectral
    "heat_lp_project", "sobolev_norm", "weyl_quantize",
    # Propagation
    "GeneratorFactory", "metric_propagate", "nls_step", "picard_iterate", "scattering_comparison",
    # Analysis
    "fit_decay_slope", "greedy_profile_extract", "inverse_strichartz_witness",
    "local_smoothing_functional", "morawetz_report", "bourgain_morawetz_ratio",
    # Drivers
    "BaseExperiment", "ExperimentFactory", "run_experiment",
]
