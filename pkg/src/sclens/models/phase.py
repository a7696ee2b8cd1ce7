"""Phase-space carriers: points, trajectories, wavepackets, FBI tables and region B."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core.exceptions import ConfigurationError, GridMismatch


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, xi) of T*R^d."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if x.shape != xi.shape:
            raise ConfigurationError("position and covector must have the same shape")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ConfigurationError("phase point has non-finite components")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self) -> int:
        return int(self.x.shape[-1])


@dataclass
class FlowTrajectory:
    """Sampled bicharacteristic: times (n,), positions and covectors (n, d), phase gamma (n,)."""

    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    symbol: np.ndarray
    gamma: np.ndarray

    @property
    def a0(self) -> float:
        return float(self.symbol[0])

    @property
    def drift(self) -> float:
        """sup_i |a_i / a_0 - 1|."""
        if self.a0 == 0.0:
            return float(np.max(np.abs(self.symbol)))
        return float(np.max(np.abs(self.symbol / self.a0 - 1.0)))

    def end(self) -> PhasePoint:
        return PhasePoint(self.x[-1], self.xi[-1])

    def rows(self):
        """CSV rows ``t, x1..xd, xi1..xid, a``."""
        for i, t in enumerate(self.times):
            yield [float(t), *self.x[i].tolist(), *self.xi[i].tolist(), float(self.symbol[i])]


@dataclass(frozen=True)
class Wavepacket:
    """Coherent state parameters: centre x0, covector xi0 and scale h."""

    x0: np.ndarray
    xi0: np.ndarray
    h: float

    def __post_init__(self) -> None:
        if not 0.0 < self.h <= 1.0:
            raise ConfigurationError(f"wavepacket scale must lie in (0, 1], got {self.h}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        xi0 = np.atleast_1d(np.asarray(self.xi0, dtype=float))
        if x0.shape != xi0.shape:
            raise ConfigurationError("wavepacket centre and covector differ in dimension")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xi0", xi0)

    @property
    def dim(self) -> int:
        return int(self.x0.shape[0])

    @property
    def width(self) -> float:
        return float(np.sqrt(self.h))


@dataclass
class FBITable:
    """Values of T_h f on a phase grid, shape (nx,)*d + (nxi,)*d.

    Position nodes are grid samples spaced by ``stride`` grid steps; covector
    nodes are ``xi_axis`` (semiclassical covector, momentum = xi / h).
    """

    dim: int
    h: float
    x_axis: np.ndarray
    xi_axis: np.ndarray
    values: np.ndarray
    stride: int = 1
    grid_points: int = 0
    grid_length: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        expected = (len(self.x_axis),) * self.dim + (len(self.xi_axis),) * self.dim
        if self.values.shape != expected:
            raise GridMismatch(f"FBI table shape {self.values.shape} != {expected}")

    @property
    def dx(self) -> float:
        return float(self.x_axis[1] - self.x_axis[0]) if len(self.x_axis) > 1 else 0.0

    @property
    def dxi(self) -> float:
        return float(self.xi_axis[1] - self.xi_axis[0]) if len(self.xi_axis) > 1 else 0.0

    @property
    def cell(self) -> float:
        return (self.dx * self.dxi) ** self.dim

    def with_values(self, values: np.ndarray) -> "FBITable":
        return FBITable(
            dim=self.dim, h=self.h, x_axis=self.x_axis, xi_axis=self.xi_axis, values=values,
            stride=self.stride, grid_points=self.grid_points, grid_length=self.grid_length,
            meta=dict(self.meta),
        )

    def phase_points(self):
        """Broadcastable position and covector arrays (coordinate index last)."""
        d = self.dim
        axes = [self.x_axis] * d + [self.xi_axis] * d
        mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
        return mesh[:d], mesh[d:]

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.cell)


@dataclass(frozen=True)
class RegionB:
    """{|x - x_h| <= h^theta, eps/10 <= |xi| <= 10/eps} at scale h."""

    center: np.ndarray
    theta: float = 0.45
    epsilon: float = 0.5
    h: float = 0.1
    band: Optional[tuple] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.theta < 0.5:
            raise ConfigurationError(f"width exponent must lie in (0, 1/2), got {self.theta}")
        lo, hi = self.band if self.band is not None else (self.epsilon / 10.0, 10.0 / self.epsilon)
        if not 0.0 <= lo < hi:
            raise ConfigurationError("frequency band of region B is empty")
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "band", (float(lo), float(hi)))

    @property
    def radius(self) -> float:
        return float(self.h ** self.theta)

    def contains(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Membership mask for broadcastable position / covector component lists."""
        dist2 = sum((xc - c) ** 2 for xc, c in zip(x, self.center))
        speed = np.sqrt(sum(k ** 2 for k in xi))
        lo, hi = self.band
        return (dist2 <= self.radius ** 2) & (speed >= lo) & (speed <= hi)
