"""Pydantic schemas."""

from .reports import (
    SlopeFit, MeasureEstimate, PreimageSweep, NontrappingReport, RefocusingScan,
    BernsteinReport, NormSuite, MorawetzReport, BourgainMorawetzResult,
    ConcentrationWitness, ProfileFrame, ProfileDecomposition, PicardReport,
    ScatteringTable, ExperimentRecord, ExperimentSummary,
)
from .run_config import EXPERIMENTS, RunConfig, build_run_config, load_run_config, parse_run_config

__all__ = [
    # Report schemas
    "SlopeFit", "MeasureEstimate", "PreimageSweep", "NontrappingReport", "RefocusingScan",
    "BernsteinReport", "NormSuite", "MorawetzReport", "BourgainMorawetzResult",
    "ConcentrationWitness", "ProfileFrame", "ProfileDecomposition", "PicardReport",
    "ScatteringTable",
    # Run schemas
    "ExperimentRecord", "ExperimentSummary", "EXPERIMENTS", "RunConfig",
    "build_run_config", "load_run_config", "parse_run_config",
]
