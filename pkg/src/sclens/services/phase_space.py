"""Gaussian wavepackets, the FBI transform at scale h and wavepacket parametrices."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.exceptions import (
    ConfigurationError,
    DimensionTooLarge,
    GridMismatch,
    NotExited,
    PhaseGridTooCoarse,
    Unresolvable,
)
from ..models.cutoffs import radial_window
from ..models.grid import Grid, GridField
from ..models.metric import Metric
from ..models.phase import FBITable, PhasePoint, RegionB, Wavepacket
from . import fourier
from .geodesic_flow import flow

logger = logging.getLogger(__name__)

ROW_CHUNK = 64


def wrapped_offset(grid: Grid, center: np.ndarray) -> List[np.ndarray]:
    """Per-axis displacement y - center reduced to [-L/2, L/2)."""
    out = []
    for c, coord in zip(center, grid.coords):
        delta = coord - c
        out.append((delta + grid.half_width) % grid.length - grid.half_width)
    return out


def synthesize_wavepacket(wp: Wavepacket, grid: Grid) -> GridField:
    """Unit-L^2 coherent state (pi h)^(-d/4) e^{i xi0 (y - x0) / h} e^{-|y - x0|^2 / (2h)}."""
    if wp.dim != grid.dim:
        raise GridMismatch("wavepacket and grid dimensions differ")
    if wp.width < 4.0 * grid.spacing:
        raise Unresolvable(
            f"packet width h^(1/2) = {wp.width:.3g} below 4 grid spacings ({grid.spacing:.3g})"
        )
    if float(np.max(np.abs(wp.xi0))) / wp.h + 6.0 / wp.width > grid.nyquist:
        raise Unresolvable("packet momentum exceeds the grid Nyquist frequency")
    if float(np.max(np.abs(wp.x0))) >= grid.half_width:
        raise ConfigurationError("packet centre lies outside the box")
    offset = wrapped_offset(grid, wp.x0)
    r2 = sum(o ** 2 for o in offset)
    phase = sum(k * o for k, o in zip(wp.xi0, offset)) / wp.h
    values = (math.pi * wp.h) ** (-grid.dim / 4.0) * np.exp(1j * phase - r2 / (2.0 * wp.h))
    return GridField(grid, values, provenance={"x0": wp.x0.tolist(), "xi0": wp.xi0.tolist(), "h": wp.h})


def packet_centroid(u: GridField) -> np.ndarray:
    """Centre of mass of |u|^2."""
    density = np.abs(u.values) ** 2
    total = density.sum()
    return np.array([float(np.sum(c * density) / total) for c in u.grid.coords])


def packet_second_moment(u: GridField, center: Sequence[float]) -> float:
    """Mean squared distance of |u|^2 from ``center`` (periodic offsets)."""
    density = np.abs(u.values) ** 2
    offset = wrapped_offset(u.grid, np.asarray(center, dtype=float))
    return float(np.sum(sum(o ** 2 for o in offset) * density) / density.sum())


# FBI transform


def _kernel_spectrum(grid: Grid, xi: np.ndarray, h: float) -> np.ndarray:
    """Continuous Fourier transform of e^{i xi s / h} e^{-|s|^2/(2h)} on the grid wavenumbers."""
    shift = sum((k - c / h) ** 2 for k, c in zip(grid.wavenumbers, xi))
    return (2.0 * math.pi * h) ** (grid.dim / 2.0) * np.exp(-0.5 * h * shift)


def fbi_normalization(h: float, dim: int) -> float:
    """(2 pi h)^(-d/2) (pi h)^(-d/4)."""
    return (2.0 * math.pi * h) ** (-dim / 2.0) * (math.pi * h) ** (-dim / 4.0)


@dataclass(frozen=True)
class PhaseGrid:
    """Phase-space sampling: position stride in grid steps and the covector axis."""

    stride: int
    xi_axis: np.ndarray

    @property
    def dxi(self) -> float:
        return float(self.xi_axis[1] - self.xi_axis[0]) if len(self.xi_axis) > 1 else 0.0


def phase_grid(
    grid: Grid,
    h: float,
    xi_max: Optional[float] = None,
    n_xi: Optional[int] = None,
    stride: Optional[int] = None,
    f: Optional[GridField] = None,
) -> PhaseGrid:
    """Choose a phase grid resolving sqrt(h) in both variables.

    The covector extent defaults to the retained band of ``f`` padded by six
    packet widths, capped at h times the Nyquist frequency.
    """
    root = math.sqrt(h)
    if stride is None:
        stride = 1
        while stride * 2 <= grid.points and 2 * stride * grid.spacing <= 0.5 * root:
            stride *= 2
    if xi_max is None:
        cap = h * grid.nyquist
        if f is not None:
            k_ret = fourier.retained_wavenumber(grid, f.values, 1e-10)
            xi_max = min(cap, h * k_ret + 6.0 * root)
        else:
            xi_max = cap
    if n_xi is None:
        n_xi = max(2, int(math.ceil(2.0 * xi_max / (0.5 * root))) + 1)
    return PhaseGrid(stride=int(stride), xi_axis=np.linspace(-xi_max, xi_max, n_xi))


def _check_resolution(dx: float, dxi: float, h: float) -> None:
    root = math.sqrt(h)
    if dx > root * (1.0 + 1e-12) or dxi > root * (1.0 + 1e-12):
        raise PhaseGridTooCoarse(
            f"phase spacings dx={dx:.3g}, dxi={dxi:.3g} exceed h^(1/2) = {root:.3g}"
        )


def _xi_rows(xi_axis: np.ndarray, dim: int) -> np.ndarray:
    mesh = np.meshgrid(*([xi_axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def fbi_transform(
    f: GridField, h: float, pgrid: Optional[PhaseGrid] = None, threads: int = 1
) -> FBITable:
    """T_h f(x, xi) = <psi^h_(x, xi), f> sampled on a phase grid; one FFT per covector row."""
    grid = f.grid
    if grid.dim == 3:
        raise DimensionTooLarge("FBI tables are supported for d = 1, 2")
    pgrid = pgrid or phase_grid(grid, h, f=f)
    dx = pgrid.stride * grid.spacing
    _check_resolution(dx, pgrid.dxi, h)
    d = grid.dim
    rows = _xi_rows(pgrid.xi_axis, d)
    spectrum = fourier.fft(f.values)
    norm = fbi_normalization(h, d)
    take = (slice(None, None, pgrid.stride),) * d
    n_x = grid.points // pgrid.stride
    out = np.empty((rows.shape[0],) + (n_x,) * d, dtype=complex)

    def work(start: int) -> None:
        for i in range(start, min(start + ROW_CHUNK, rows.shape[0])):
            row = fourier.ifft(_kernel_spectrum(grid, rows[i], h) * spectrum)
            out[i] = norm * row[take]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        list(pool.map(work, range(0, rows.shape[0], ROW_CHUNK)))

    n_xi = len(pgrid.xi_axis)
    values = np.moveaxis(out.reshape((n_xi,) * d + (n_x,) * d), list(range(d)), list(range(d, 2 * d)))
    return FBITable(
        dim=d, h=h, x_axis=grid.axis[::pgrid.stride], xi_axis=pgrid.xi_axis, values=values,
        stride=pgrid.stride, grid_points=grid.points, grid_length=grid.length,
    )


def fbi_adjoint(table: FBITable, grid: Optional[Grid] = None) -> GridField:
    """T_h* F(y) = sum over cells of psi^h_(x, xi)(y) F(x, xi) dx dxi."""
    grid = grid or Grid(table.dim, table.grid_length, table.grid_points)
    if grid.points != table.grid_points or grid.length != table.grid_length:
        raise GridMismatch("FBI table was assembled on a different grid")
    _check_resolution(table.dx, table.dxi, table.h)
    d = grid.dim
    h = table.h
    rows = _xi_rows(table.xi_axis, d)
    n_x = len(table.x_axis)
    by_row = np.moveaxis(table.values, list(range(d, 2 * d)), list(range(d))).reshape(
        (rows.shape[0],) + (n_x,) * d
    )
    take = (slice(None, None, table.stride),) * d
    accumulated = np.zeros(grid.shape, dtype=complex)
    upsampled = np.zeros(grid.shape, dtype=complex)
    for i in range(rows.shape[0]):
        if not np.any(by_row[i]):
            continue
        upsampled[take] = by_row[i]
        accumulated += fourier.fft(upsampled) * _kernel_spectrum(grid, rows[i], h)
    weight = fbi_normalization(h, d) * table.cell / grid.cell_volume
    return GridField(grid, weight * fourier.ifft(accumulated))


def truncate_to_region(table: FBITable, region: RegionB):
    """Split F into (1_B F, (1 - 1_B) F)."""
    x, xi = table.phase_points()
    mask = np.broadcast_to(region.contains(x, xi), table.values.shape)
    inside = np.where(mask, table.values, 0.0)
    return table.with_values(inside), table.with_values(table.values - inside)


def annulus_profile(
    grid: Grid, h: float, epsilon: float, center: Optional[Sequence[float]] = None
) -> GridField:
    """phi_h = h^(-(d-2)/2) phi((x - x_h)/h) with phi-hat a smoothstep window on [eps, 1/eps].

    Returned with unit H^1-dot norm.
    """
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    k = np.sqrt(grid.k_squared) * h
    window = radial_window(k, (epsilon, 2.0 * epsilon), (0.5 / epsilon, 1.0 / epsilon))
    shift = np.exp(-1j * sum(kk * c for kk, c in zip(grid.wavenumbers, center)))
    values = fourier.ifft(window * shift)
    values = values / flat_h1_norm(grid, values)
    return GridField(grid, values, provenance={"h": h, "epsilon": epsilon})


def flat_h1_norm(grid: Grid, values: np.ndarray) -> float:
    """||grad u||_{L^2} by Parseval."""
    spectrum = fourier.fft(values)
    return float(
        np.sqrt(np.sum(grid.k_squared * np.abs(spectrum) ** 2) * grid.cell_volume / grid.points ** grid.dim)
    )


def off_region_zones(table: FBITable, region: RegionB) -> Dict[str, float]:
    """max |T_h f| over the complement of B split into position / low / high / corner zones."""
    x, xi = table.phase_points()
    dist2 = sum((xc - c) ** 2 for xc, c in zip(x, region.center))
    speed = np.sqrt(sum(k ** 2 for k in xi))
    lo, hi = region.band
    near = np.broadcast_to(dist2 <= region.radius ** 2, table.values.shape)
    low = np.broadcast_to(speed < lo, table.values.shape)
    high = np.broadcast_to(speed > hi, table.values.shape)
    band = ~(low | high)
    modulus = np.abs(table.values)
    peak = float(modulus.max()) or 1.0

    def zone_max(mask: np.ndarray) -> float:
        return float(modulus[mask].max()) / peak if np.any(mask) else 0.0

    return {
        "position": zone_max(~near & band),
        "low": zone_max(near & low),
        "high": zone_max(near & high),
        "corner": zone_max(~near & ~band),
    }


def decay_outside_region(
    grid: Grid,
    h_values: Sequence[float],
    epsilon: float = 0.5,
    theta: float = 0.45,
    center: Optional[Sequence[float]] = None,
) -> List[Dict[str, float]]:
    """Off-region size of T_h phi_h for each h: H^1-dot share of T_h*(1 - 1_B)T_h phi_h and zone maxima."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    rows = []
    for h in h_values:
        phi = annulus_profile(grid, h, epsilon, center)
        table = fbi_transform(phi, h)
        region = RegionB(center=center, theta=theta, epsilon=epsilon, h=h)
        _, outside = truncate_to_region(table, region)
        tail = fbi_adjoint(outside, grid)
        zones = off_region_zones(table, region)
        row = {"h": float(h), "h1_ratio": flat_h1_norm(grid, tail.values), **zones}
        row["zone_max"] = max(zones.values())
        logger.info("region-B tail h=%g ratio=%.3e zone_max=%.3e", h, row["h1_ratio"], row["zone_max"])
        rows.append(row)
    return rows


# Parametrices


@dataclass(frozen=True)
class PacketFrame:
    """Flow-transported frame of a wavepacket at time t."""

    time: float
    center: np.ndarray
    momentum: np.ndarray
    gamma: float
    width: float
    h: float

    def phase(self, grid: Grid) -> np.ndarray:
        """xi^t . (x - x^t) / h + gamma / h."""
        offset = wrapped_offset(grid, self.center)
        return (sum(k * o for k, o in zip(self.momentum, offset)) + self.gamma) / self.h


def short_time_parametrix(
    wp: Wavepacket, metric: Metric, t: float, dt: float = 1e-3, width_constant: float = 1.0
) -> PacketFrame:
    """Frame (x0^t, xi0^t, gamma) predicted for e^{-itA(h)/h} psi^h at semiclassical time t."""
    if t == 0.0:
        return PacketFrame(0.0, wp.x0.copy(), wp.xi0.copy(), 0.0, width_constant * wp.width, wp.h)
    end, trajectory = flow(metric, PhasePoint(wp.x0, wp.xi0), t, dt=dt, record=True)
    return PacketFrame(
        time=float(t),
        center=end.x,
        momentum=end.xi,
        gamma=float(trajectory.gamma[-1]),
        width=width_constant * wp.width,
        h=wp.h,
    )


@dataclass(frozen=True)
class Envelope:
    """h^(-3d/4) |t|^(-d/2) (1 + |x - x0^t| / (h^(1/2) |t|))^(-N) around the transported centre."""

    frame: PacketFrame
    tail: int
    dim: int

    def __call__(self, grid: Grid) -> np.ndarray:
        h, t = self.frame.h, abs(self.frame.time)
        offset = wrapped_offset(grid, self.frame.center)
        dist = np.sqrt(sum(o ** 2 for o in offset))
        return (
            h ** (-0.75 * self.dim)
            * t ** (-0.5 * self.dim)
            * (1.0 + dist / (math.sqrt(h) * t)) ** (-self.tail)
        )

    def fitted_constant(self, u: GridField) -> float:
        """max |u| / envelope over the grid."""
        return float(np.max(np.abs(u.values) / self(u.grid)))


def long_time_envelope(
    wp: Wavepacket,
    metric: Metric,
    t: float,
    t_exit: float,
    tail: int = 4,
    dt: float = 1e-3,
    exit_radius: float = 10.0,
) -> Envelope:
    """Envelope bound for t >= T_exit once the packet's ray has left |x| < ``exit_radius``."""
    if abs(t) < t_exit:
        raise ConfigurationError(f"time {t} precedes the exit time {t_exit}")
    at_exit = flow(metric, PhasePoint(wp.x0, wp.xi0), t_exit, dt=dt)
    if float(np.linalg.norm(at_exit.x)) < exit_radius:
        raise NotExited(
            f"ray from x0={wp.x0.tolist()} is at |x| = {np.linalg.norm(at_exit.x):.3g} at T_exit"
        )
    frame = short_time_parametrix(wp, metric, t, dt=dt)
    return Envelope(frame=frame, tail=tail, dim=wp.dim)

