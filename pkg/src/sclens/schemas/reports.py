"""Report schemas returned by the diagnostic operations."""

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict


class ArrayModel(BaseModel):
    """Base for reports that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


class SlopeFit(BaseModel):
    """Least-squares slope of log(value) against log(parameter)."""
    slope: float
    width: float  # 95% confidence half-width
    intercept: float
    points: int
    r_value: float = 0.0

    def within(self, target: float, tolerance: float) -> bool:
        """True when the slope lies within ``tolerance`` of ``target``."""
        return abs(self.slope - target) <= tolerance


class MeasureEstimate(BaseModel):
    """Monte-Carlo estimate of the exponential-map preimage measure."""
    radius: float
    measure: float
    stderr: float
    hits: int
    samples: int
    reliable: bool
    seed: int


class PreimageSweep(BaseModel):
    """Preimage measures over a radius ladder with the fitted exponent."""
    estimates: List[MeasureEstimate]
    fit: Optional[SlopeFit] = None
    reuse_rays: bool = False


class NontrappingReport(BaseModel):
    """Escape statistics of rays launched from region B."""
    all_escaped: bool
    escape_time: float
    non_escapers: int
    sample_count: int
    max_drift: float = 0.0


class RefocusingScan(ArrayModel):
    """Endpoint histogram of x^t(x, .) over a covector annulus."""
    counts: np.ndarray
    reference: np.ndarray
    edges: List[np.ndarray]
    peak_ratio: float  # max count / max flat-reference count
    uniform_ratio: float  # max count / mean occupied flat-reference count


class BernsteinReport(BaseModel):
    """Measured L^p -> L^q norms of P_{<=N} over a dyadic ladder."""
    p: float
    q: float
    levels: List[int]
    ratios: List[float]
    fit: Optional[SlopeFit] = None
    expected_exponent: float


class NormSuite(BaseModel):
    """Per-slice Lebesgue norms and space-time accumulators."""
    times: List[float]
    l2: List[float]
    l6: List[float]
    linf: List[float]
    grad_l2: List[float]
    z_proxy: float
    n_proxy: float
    y_proxy: float

    def holder_consistent(self, rtol: float = 1e-12) -> bool:
        """||u||_6 <= ||u||_2^(1/3) ||u||_inf^(2/3) on every slice."""
        return all(
            l6 <= (l2 ** (1.0 / 3.0)) * (li ** (2.0 / 3.0)) * (1.0 + rtol) + 1e-300
            for l2, l6, li in zip(self.l2, self.l6, self.linf)
        )


class MorawetzReport(BaseModel):
    """Both sides of the Morawetz identity on interior slices."""
    radius: float
    times: List[float]
    action: List[float]
    second_derivative: List[float]
    hessian_term: List[float]
    bilaplacian_term: List[float]
    nonlinear_term: List[float]
    residual: List[float]
    max_residual: float
    derivative_bound: float  # max |dM/dt| / (||grad u|| ||u||)


class BourgainMorawetzResult(BaseModel):
    """Localized |u|^6 / <x> integral over I against |I|^(1/2) E(u)."""
    interval_length: float
    raw_integral: float
    energy: float
    ratio: float
    degenerate: bool = False


class ConcentrationWitness(BaseModel):
    """Argmax frame of the localized amplitude search."""
    witness_t: float
    witness_x: List[float]
    witness_N: float
    value: float
    proxy: float
    ratio: float  # value / proxy; recorded, never asserted


class ProfileFrame(BaseModel):
    """One extracted bubble."""
    scale: float  # lambda = 1 / N*
    center: List[float]
    time: float
    norm: float  # H^1-dot norm of the extracted profile


class ProfileDecomposition(BaseModel):
    """Greedy decomposition into bubbles plus remainder."""
    frames: List[ProfileFrame]
    input_norm: float
    remainder_norm: float
    step_norms: List[float]
    decoupling_defect: float
    stalled: bool = False


class PicardReport(ArrayModel):
    """Successive Duhamel iterates and their contraction ratios."""
    ratios: List[float]
    differences: List[float]
    iterations: int
    fixed_point: bool
    times: np.ndarray
    iterate: np.ndarray  # last iterate, (slices, *grid.shape)


class ScatteringTable(BaseModel):
    """Cauchy differences of the wave operator approximants in H^1-dot."""
    times: List[float]
    differences: List[float]
    boundary_mass: float


class ExperimentRecord(BaseModel):
    """One row of a sweep."""
    experiment: str
    config_hash: str
    seed: int
    parameters: Dict[str, Any]
    values: Dict[str, float]
    flags: Dict[str, bool] = {}
    wall_clock: float = 0.0


class ExperimentSummary(BaseModel):
    """Summary written next to the sweep CSV files."""
    experiment: str
    config_hash: str
    seed: int
    records: int
    slopes: Dict[str, SlopeFit] = {}
    values: Dict[str, float] = {}
    flags: Dict[str, bool] = {}
    tolerances: Dict[str, float] = {}
    files: List[str] = []
    wall_clock: float = 0.0  # seconds; kept out of the CSV bodies

    @property
    def passed(self) -> bool:
        return all(self.flags.values())
