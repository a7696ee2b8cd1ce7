"""Numerical domain models."""

from .grid import Grid, GridField, FieldSeries
from .metric import Metric, MetricFamily, MetricTable, bump
from .phase import PhasePoint, FlowTrajectory, Wavepacket, FBITable, RegionB
from .cutoffs import FrequencyCutoffs, smoothstep, radial_window
from .state import EvolutionState, NLSProblem

__all__ = [
    # Grids and fields
    "Grid", "GridField", "FieldSeries",
    # Metrics
    "Metric", "MetricFamily", "MetricTable", "bump",
    # Phase space
    "PhasePoint", "FlowTrajectory", "Wavepacket", "FBITable", "RegionB",
    # Cutoffs
    "FrequencyCutoffs", "smoothstep", "radial_window",
    # Evolution
    "EvolutionState", "NLSProblem",
]
