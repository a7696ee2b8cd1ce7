"""Metrics, derived tensors and the Laplace-Beltrami operator on grid fields."""

import hashlib
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Optional, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..core.exceptions import (
    ConfigurationError,
    MetricSupportError,
    NonPositiveDefinite,
    UnsupportedDimension,
)
from ..models.grid import Grid, GridField
from ..models.metric import Metric, MetricFamily, MetricTable
from . import fourier

logger = logging.getLogger(__name__)


def build_metric(
    family: Union[str, MetricFamily],
    epsilon: float = 0.0,
    r_supp: float = 1.0,
    dim: int = 2,
    table: Optional[MetricTable] = None,
    check_points: Optional[int] = None,
) -> Metric:
    """Build a metric and check positive-definiteness on a sample grid."""
    if dim not in (1, 2, 3):
        raise UnsupportedDimension(f"dimension must be 1, 2 or 3, got {dim}")
    family = MetricFamily(family)
    digest = ""
    if table is not None:
        if table.dim != dim:
            raise ConfigurationError("table dimension does not match metric dimension")
        digest = hashlib.sha1(np.ascontiguousarray(table.values).tobytes()).hexdigest()
    metric = Metric(
        dim=dim, family=family, epsilon=float(epsilon), r_supp=float(r_supp),
        table=table, table_digest=digest,
    )
    if table is not None:
        _check_table_support(metric)

    n = check_points or {1: 512, 2: 96, 3: 32}[dim]
    axis = np.linspace(-1.2 * r_supp, 1.2 * r_supp, n)
    pts = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    g = metric.g(pts)
    if not np.all(np.isfinite(g)):
        raise NonPositiveDefinite(f"metric {family.value} with epsilon={epsilon} is not finite")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite(
            f"metric {family.value} with epsilon={epsilon} fails Cholesky"
        ) from exc
    logger.debug("built metric %s eps=%g d=%d", family.value, epsilon, dim)
    return metric


def christoffel(metric: Metric, x: np.ndarray) -> np.ndarray:
    """Christoffel symbols Gamma^m_jk(x), shape (..., d[m], d[j], d[k])."""
    dg = metric.dg(x)
    term = (
        np.swapaxes(dg, -3, -2)
        + np.moveaxis(dg, (-3, -2, -1), (-1, -2, -3))
        - dg
    )
    # term[..., l, j, k] = d_j g_lk + d_k g_lj - d_l g_jk
    return 0.5 * np.einsum("...ml,...ljk->...mjk", metric.g_inv(x), term)


def principal_symbol(metric: Metric, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """a(x, xi) = g^jk(x) xi_j xi_k."""
    xi = np.asarray(xi, dtype=float)
    if metric.dim == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    return np.einsum("...jk,...j,...k->...", metric.g_inv(x), xi, xi)


@dataclass(frozen=True)
class SampledMetric:
    """Metric quantities evaluated on the samples of a grid."""

    grid: Grid
    g_inv: np.ndarray  # (d, d, *shape)
    sqrt_det: np.ndarray
    rho: np.ndarray
    weyl_correction: np.ndarray  # d_j d_k g^jk

    @property
    def flux_weight(self) -> np.ndarray:
        """sqrt|g| g^jk."""
        return self.sqrt_det * self.g_inv


@lru_cache(maxsize=32)
def sample_metric(metric: Metric, grid: Grid) -> SampledMetric:
    if metric.dim != grid.dim:
        raise ConfigurationError("metric and grid dimensions differ")
    pts = grid.points_array
    g_inv = np.moveaxis(metric.g_inv(pts), (-2, -1), (0, 1))
    d2 = metric.d2g_inv(pts)
    correction = np.einsum("...jkjk->...", d2)
    sqrt_det = metric.sqrt_det(pts)
    return SampledMetric(
        grid=grid,
        g_inv=np.ascontiguousarray(g_inv),
        sqrt_det=sqrt_det,
        rho=np.sqrt(sqrt_det),
        weyl_correction=correction,
    )


def divergence_form(grid: Grid, coefficient: np.ndarray, values: np.ndarray) -> np.ndarray:
    """d_j (c^jk d_k u) for a coefficient tensor of shape (d, d, *shape).

    Both factors keep the Nyquist mode, so a constant coefficient reproduces the multiplier -c^jk k_j k_k
    exactly on every mode.
    """
    grad = fourier.gradient(grid, values, keep_nyquist=True)
    flux = np.einsum("jk...,k...->j...", coefficient, grad)
    return fourier.divergence(grid, flux, keep_nyquist=True)


def laplace_beltrami(metric: Metric, u: GridField) -> GridField:
    """Delta_g u = |g|^(-1/2) d_j (|g|^(1/2) g^jk d_k u) by spectral differentiation."""
    sm = sample_metric(metric, u.grid)
    return u.with_values(divergence_form(u.grid, sm.flux_weight, u.values) / sm.sqrt_det)


@dataclass(frozen=True)
class ConjugatedOperator:
    """A = rho (-Delta_g) rho^-1 = -d_j g^jk d_k + V, self-adjoint on L^2(dx)."""

    metric: Metric
    grid: Grid
    potential: np.ndarray

    def divergence_part(self, values: np.ndarray) -> np.ndarray:
        sm = sample_metric(self.metric, self.grid)
        return -divergence_form(self.grid, sm.g_inv, values)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.divergence_part(values) + self.potential * values

    def __call__(self, u: GridField) -> GridField:
        return u.with_values(self.apply(u.values))


def conjugated_operator(metric: Metric, grid: Grid) -> ConjugatedOperator:
    """Build A with the potential V = -rho Delta_g(rho^-1) evaluated on the grid."""
    sm = sample_metric(metric, grid)
    if metric.is_flat:
        potential = np.zeros(grid.shape)
    else:
        inv_rho = GridField(grid, 1.0 / sm.rho)
        potential = -(sm.rho * laplace_beltrami(metric, inv_rho).values).real
    return ConjugatedOperator(metric=metric, grid=grid, potential=potential)


def semiclassical_apply(metric: Metric, grid: Grid, h: float, values: np.ndarray) -> np.ndarray:
    """A(h)/h for a(x, xi) = g^jk xi_j xi_k in exact Weyl form.

    a^w(x, hD) = hD_j g^jk hD_k - (h^2/4) d_j d_k g^jk, so
    A(h)/h = -h d_j g^jk d_k - (h/4) d_j d_k g^jk.
    """
    sm = sample_metric(metric, grid)
    return -h * divergence_form(grid, sm.g_inv, values) - 0.25 * h * sm.weyl_correction * values


def c3_estimate(metric: Metric, points: Optional[int] = None) -> Dict[str, float]:
    """Reported sup norms of d^k (g - delta), k = 0..3, on a grid covering the support."""
    n = points or {1: 1024, 2: 128, 3: 40}[metric.dim]
    axis = np.linspace(-1.25 * metric.r_supp, 1.25 * metric.r_supp, n)
    step = axis[1] - axis[0]
    pts = np.stack(np.meshgrid(*([axis] * metric.dim), indexing="ij"), axis=-1)
    layers = [metric.g(pts) - np.eye(metric.dim)]
    result = {"order0": float(np.max(np.abs(layers[0])))}
    current = [layers[0]]
    for order in (1, 2, 3):
        nxt = []
        for arr in current:
            for axis_index in range(metric.dim):
                nxt.append(np.gradient(arr, step, axis=axis_index))
        current = nxt
        result[f"order{order}"] = float(max(np.max(np.abs(a)) for a in current))
    result["c3"] = max(result.values())
    return result


# Tabulated metrics


def _central_difference(values: np.ndarray, step: float, axis: int) -> np.ndarray:
    """Fourth-order centred difference on a periodic table."""
    return (
        -np.roll(values, -2, axis=axis)
        + 8.0 * np.roll(values, -1, axis=axis)
        - 8.0 * np.roll(values, 1, axis=axis)
        + np.roll(values, 2, axis=axis)
    ) / (12.0 * step)


class TabulatedMetric:
    """Interpolated evaluation of a custom metric table and its derivatives."""

    def __init__(self, metric: Metric):
        table = metric.table
        assert table is not None
        self.metric = metric
        d = table.dim
        step = table.length / table.points
        axes = tuple([table.axis] * d)
        g = np.asarray(table.values, dtype=float)
        g_inv = np.linalg.inv(g)
        grid_axes = list(range(d))
        dg = np.stack([_central_difference(g, step, a) for a in grid_axes], axis=d)
        dg_inv = np.stack([_central_difference(g_inv, step, a) for a in grid_axes], axis=d)
        d2g_inv = np.stack(
            [np.stack([_central_difference(dg_inv[..., a, :, :], step, b) for b in grid_axes],
                      axis=d) for a in grid_axes],
            axis=d,
        )

        def interp(values: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
            return RegularGridInterpolator(
                axes, values, method="cubic", bounds_error=False, fill_value=None
            )

        self._g = interp(g)
        self._g_inv = interp(g_inv)
        self._dg = interp(dg)
        self._dg_inv = interp(dg_inv)
        self._d2g_inv = interp(d2g_inv)

    def _evaluate(self, fn, pts: np.ndarray, outside: np.ndarray) -> np.ndarray:
        flat = pts.reshape(-1, self.metric.dim)
        out = fn(flat).reshape(pts.shape[:-1] + fn.values.shape[self.metric.dim:])
        inside = np.linalg.norm(pts, axis=-1) < self.metric.r_supp
        return np.where(inside.reshape(inside.shape + (1,) * (out.ndim - inside.ndim)), out, outside)

    def g(self, pts: np.ndarray) -> np.ndarray:
        return self._evaluate(self._g, pts, np.eye(self.metric.dim))

    def g_inv(self, pts: np.ndarray) -> np.ndarray:
        return self._evaluate(self._g_inv, pts, np.eye(self.metric.dim))

    def dg(self, pts: np.ndarray) -> np.ndarray:
        return self._evaluate(self._dg, pts, 0.0)

    def dg_inv(self, pts: np.ndarray) -> np.ndarray:
        return self._evaluate(self._dg_inv, pts, 0.0)

    def d2g_inv(self, pts: np.ndarray) -> np.ndarray:
        return self._evaluate(self._d2g_inv, pts, 0.0)


@lru_cache(maxsize=8)
def tabulated_metric(metric: Metric) -> TabulatedMetric:
    return TabulatedMetric(metric)


def _check_table_support(metric: Metric) -> None:
    table = metric.table
    assert table is not None
    pts = np.stack(np.meshgrid(*([table.axis] * table.dim), indexing="ij"), axis=-1)
    outside = np.linalg.norm(pts, axis=-1) >= metric.r_supp
    deviation = np.abs(np.asarray(table.values) - np.eye(table.dim))[outside]
    if deviation.size and float(deviation.max()) != 0.0:
        raise MetricSupportError(
            f"tabulated metric deviates from delta by {deviation.max():.3e} outside the support"
        )


def load_metric_table(path: Union[str, Path]) -> MetricTable:
    """Read a custom table: header ``d L n``, then rows ``x_index g_11 g_12 ...``."""
    lines = [
        line.split("#", 1)[0].strip()
        for line in Path(path).read_text().splitlines()
    ]
    lines = [line for line in lines if line]
    if not lines:
        raise ConfigurationError(f"empty metric table {path}")
    try:
        d_str, l_str, n_str = lines[0].split()
        d, length, n = int(d_str), float(l_str), int(n_str)
        rows = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    except ValueError as exc:
        raise ConfigurationError(f"malformed metric table {path}: {exc}") from exc
    if d not in (1, 2, 3):
        raise UnsupportedDimension(f"table dimension {d}")
    if rows.shape != (n ** d, 1 + d * d):
        raise ConfigurationError(
            f"metric table {path} needs {n ** d} rows of {1 + d * d} columns, got {rows.shape}"
        )
    values = np.empty((n ** d, d, d))
    values[rows[:, 0].astype(int)] = rows[:, 1:].reshape(-1, d, d)
    values = values.reshape((n,) * d + (d, d))
    return MetricTable(dim=d, length=length, points=n, values=values)


def save_metric_table(table: MetricTable, path: Union[str, Path]) -> None:
    d, n = table.dim, table.points
    flat = np.asarray(table.values).reshape(n ** d, d * d)
    with open(path, "w") as handle:
        handle.write(f"{d} {table.length!r} {n}\n")
        for index, row in enumerate(flat):
            handle.write(f"{index} " + " ".join(format(v, ".17g") for v in row) + "\n")


def table_from_metric(metric: Metric, length: float, points: int) -> MetricTable:
    """Tabulate a built-in metric, e.g. to exercise the custom-table path."""
    axis = -0.5 * length + (length / points) * np.arange(points)
    pts = np.stack(np.meshgrid(*([axis] * metric.dim), indexing="ij"), axis=-1)
    return MetricTable(dim=metric.dim, length=length, points=points, values=metric.g(pts))
