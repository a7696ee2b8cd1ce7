"""Run configuration schema for the experiment drivers."""

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..core.config import settings
from ..core.exceptions import ConfigurationError
from ..core.storage import parse_key_values, read_key_values

EXPERIMENTS = (
    "geodesic",
    "extinction",
    "dispersive",
    "converge",
    "morawetz",
    "smoothing",
    "profiles",
    "nls",
)

BOX_FACTOR = 16.0

# Keys that never change a measured value and so stay out of the config hash.
UNHASHED = ("experiment", "out", "threads")

LIST_FIELDS = (
    "times",
    "h_list",
    "n_list",
    "b_list",
    "r_list",
    "lengths",
    "scales",
    "centers",
    "source",
    "target",
)


class RunConfig(BaseModel):
    """Schema for one experiment run."""

    experiment: str = Field(..., description="Experiment (CLI subcommand) name")

    # Metric
    metric: str = Field("flat", description="flat, conformal-bump, lens or custom-table")
    epsilon: float = Field(0.0, description="Perturbation size")
    r_supp: float = Field(1.0, gt=0.0, description="Support radius of g - delta")
    metric_table: Optional[str] = Field(None, description="Path of a custom metric table")

    # Grid
    dim: int = Field(1, ge=1, le=3)
    length: Optional[float] = Field(None, gt=0.0, description="Box side L (default 16 r_supp)")
    points: int = Field(1024, ge=8, description="Samples per axis N")

    # Time controls
    dt: float = Field(1e-3, gt=0.0)
    t_max: float = Field(1.0, gt=0.0)
    times: List[float] = []
    scheme: str = "auto"

    # Parameter ladders
    h_list: List[float] = []
    n_list: List[float] = []
    b_list: List[float] = []
    r_list: List[float] = []
    lengths: List[float] = []  # interval lengths |I|
    scales: List[float] = []  # lambda_n
    centers: List[float] = []  # first coordinate of x_n

    # Experiment-specific knobs
    source: List[float] = []  # geodesic base point x
    target: List[float] = []  # geodesic target point z
    samples: int = Field(100_000, ge=1)
    xi_max: float = Field(4.0, gt=0.0)
    band_epsilon: float = Field(0.25, gt=0.0, lt=1.0, description="Frequency annulus [eps, 1/eps]")
    lebesgue_q: float = Field(8.0, ge=2.0, description="Extinction Lebesgue exponent")
    extinction_window: float = Field(4.0, gt=0.0, description="T in t >= T h^2")
    short_window: float = Field(0.5, gt=0.0, description="Short-time constant c in t <= c h")
    fixed_time: float = Field(1.0, gt=0.0)
    scenario: str = "b"
    window: float = Field(8.0, gt=0.0, description="Local smoothing time window T")
    tube_radius: float = Field(16.0, gt=0.0, description="Local smoothing tube radius R")
    morawetz_radius: float = Field(2.0, gt=0.0, description="Virial weight radius R; needs 2R below L/2")
    slices: int = Field(9, ge=2)
    refinements: int = Field(2, ge=1)
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0.0)
    exponent: int = 5
    mu: int = 1
    max_bubbles: int = Field(8, ge=1, le=8)
    ladder_step: float = Field(0.0, ge=0.0, description="Witness time ladder step (0: t = 0 only)")
    ladder_count: int = Field(0, ge=0)
    picard_iterations: int = Field(0, ge=0)

    # Run controls
    seed: int = Field(0, ge=0, lt=2 ** 64)
    out: Optional[str] = None
    threads: int = Field(settings.DEFAULT_THREADS, ge=1)
    tolerances: Dict[str, float] = {}

    class Config:
        """Pydantic config."""

        extra = "forbid"

    @field_validator(*LIST_FIELDS, mode="before")
    @classmethod
    def split_list(cls, v):
        """Accept comma-separated strings for ladder values."""
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @field_validator("tolerances", mode="before")
    @classmethod
    def split_tolerances(cls, v):
        """Accept ``name:value, name:value`` strings."""
        if not isinstance(v, str):
            return v
        result = {}
        for item in v.split(","):
            if not item.strip():
                continue
            if ":" not in item:
                raise ValueError(f"tolerance entry {item.strip()!r} is not name:value")
            name, value = item.split(":", 1)
            result[name.strip()] = value.strip()
        return result

    @field_validator("experiment")
    @classmethod
    def known_experiment(cls, v: str) -> str:
        if v not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {v!r}; expected one of {', '.join(EXPERIMENTS)}")
        return v

    @field_validator("scenario")
    @classmethod
    def known_scenario(cls, v: str) -> str:
        if v not in ("a", "b", "c"):
            raise ValueError("scenario must be a, b or c")
        return v

    @model_validator(mode="after")
    def default_length(self) -> "RunConfig":
        """The box side defaults to 16 support radii."""
        if self.length is None:
            self.length = BOX_FACTOR * self.r_supp
        return self

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def config_hash(self) -> str:
        """Short sha256 of the physical parameters (experiment name, output and threads excluded)."""
        payload = self.model_dump(exclude=set(UNHASHED))
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def build_run_config(values: Dict[str, object], source: str = "<config>") -> RunConfig:
    """Validate raw key-value pairs; validation failures surface as ConfigurationError."""
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(f"{source}: {problems}") from exc


def parse_run_config(text: str, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    values: Dict[str, object] = dict(parse_key_values(text))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_run_config(values)


def load_run_config(
    path: Union[str, Path], overrides: Optional[Dict[str, object]] = None
) -> RunConfig:
    """Read a ``key = value`` file and apply command-line overrides."""
    values: Dict[str, object] = dict(read_key_values(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_run_config(values, source=str(path))
