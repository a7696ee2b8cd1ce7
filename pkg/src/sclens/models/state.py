"""Evolution states and nonlinear Schrodinger problems."""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..core.exceptions import ConfigurationError
from .grid import GridField
from .metric import Metric


@dataclass
class EvolutionState:
    """A field at time t with its running diagnostics."""

    field: GridField
    time: float = 0.0
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def advanced(self, values: np.ndarray, dt: float, **diagnostics: float) -> "EvolutionState":
        t = self.time + dt
        return EvolutionState(self.field.with_values(values, time=t), t, dict(diagnostics))


@dataclass(frozen=True)
class NLSProblem:
    """i u_t + Delta_g u = mu |u|^(p-1) u on a periodic grid."""

    metric: Metric
    initial: GridField
    exponent: int = 5
    mu: int = 1
    times: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.mu not in (0, 1):
            raise ConfigurationError(f"nonlinearity sign must be 0 or 1, got {self.mu}")
        if self.exponent < 3 or self.exponent % 2 == 0:
            raise ConfigurationError(f"exponent must be an odd integer >= 3, got {self.exponent}")
        if self.metric.dim != self.initial.grid.dim:
            raise ConfigurationError("metric and initial data dimensions differ")

    @property
    def grid(self):
        return self.initial.grid

    @property
    def is_linear(self) -> bool:
        return self.mu == 0
