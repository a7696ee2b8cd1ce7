"""Periodic grids and the fields sampled on them."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from ..core.exceptions import ConfigurationError, GridMismatch, UnsupportedDimension


@dataclass(frozen=True)
class Grid:
    """Periodic box [-L/2, L/2)^d sampled with N points per axis."""

    dim: int
    length: float
    points: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise UnsupportedDimension(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.points < 2 or self.points & (self.points - 1):
            raise ConfigurationError(f"points per axis must be a power of two, got {self.points}")
        if self.length <= 0:
            raise ConfigurationError("box length must be positive")

    @property
    def spacing(self) -> float:
        return self.length / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def half_width(self) -> float:
        return 0.5 * self.length

    @cached_property
    def axis(self) -> np.ndarray:
        """One-dimensional coordinates of the samples."""
        return -0.5 * self.length + self.spacing * np.arange(self.points)

    @cached_property
    def coords(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def points_array(self) -> np.ndarray:
        """Sample positions with the coordinate index last, shape (*shape, d)."""
        return np.stack(self.coords, axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c ** 2 for c in self.coords))

    @cached_property
    def wave_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.wave_axis] * self.dim), indexing="ij"))

    @cached_property
    def odd_wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """Wavenumbers with the Nyquist mode zeroed, used for odd-order derivatives."""
        k = self.wave_axis.copy()
        k[self.points // 2] = 0.0
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k ** 2 for k in self.wavenumbers)

    @property
    def nyquist(self) -> float:
        return np.pi / self.spacing

    def boundary_mask(self, zone: float) -> np.ndarray:
        """Samples within ``zone * L`` of a face of the box."""
        limit = (0.5 - zone) * self.length
        return np.max(np.abs(self.points_array), axis=-1) >= limit

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatch(f"grid mismatch: {self} vs {other}")


@dataclass
class GridField:
    """Complex field on a periodic grid."""

    grid: Grid
    values: np.ndarray
    time: Optional[float] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(
                f"value buffer shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_function(
        cls, grid: Grid, func: Callable[..., np.ndarray], **provenance: Any
    ) -> "GridField":
        """Sample ``func(*coords)`` on the grid."""
        return cls(grid, func(*grid.coords), provenance=dict(provenance))

    def with_values(self, values: np.ndarray, time: Optional[float] = None) -> "GridField":
        return GridField(
            self.grid,
            values,
            time=self.time if time is None else time,
            provenance=dict(self.provenance),
        )

    def copy(self) -> "GridField":
        return self.with_values(self.values.copy())

    def __add__(self, other: "GridField") -> "GridField":
        self.grid.check_same(other.grid)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        self.grid.check_same(other.grid)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "GridField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        """L^2(dx) norm by Riemann sum."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def boundary_mass_fraction(self, zone: float) -> float:
        """Share of |u|^2 lying in the boundary zone of the box."""
        density = np.abs(self.values) ** 2
        total = float(np.sum(density))
        if total == 0.0:
            return 0.0
        return float(np.sum(density[self.grid.boundary_mask(zone)]) / total)


@dataclass
class FieldSeries:
    """Time-ordered slices of a field, stored as one array (n_slices, *grid.shape)."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.times),) + self.grid.shape:
            raise GridMismatch("series values do not match times and grid")

    def __len__(self) -> int:
        return len(self.times)

    def slice(self, index: int) -> GridField:
        return GridField(self.grid, self.values[index], time=float(self.times[index]))

    def window(self, t_start: float, t_stop: float) -> "FieldSeries":
        keep = (self.times >= t_start - 1e-12) & (self.times <= t_stop + 1e-12)
        return FieldSeries(self.grid, self.times[keep], self.values[keep])
