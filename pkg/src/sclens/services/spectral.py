"""Fourier multipliers, Weyl quantization, heat-semigroup Littlewood-Paley projections, Sobolev norms."""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from ..core.config import settings
from ..core.exceptions import ConfigurationError, DimensionTooLarge, SolverDiverged
from ..models.cutoffs import FrequencyCutoffs, smoothstep
from ..models.grid import Grid, GridField
from ..models.metric import Metric
from . import fourier
from .geometry import divergence_form, principal_symbol, sample_metric

logger = logging.getLogger(__name__)

Symbol = Callable[[np.ndarray, np.ndarray], np.ndarray]

WEYL_TABLE_LIMIT = 1 << 24
EIGEN_LIMIT = 4096
HEAT_METHODS = ("auto", "fourier", "eigen", "crank_nicolson")


def fourier_multiplier(m: fourier.Multiplier, f: GridField) -> GridField:
    """inverse-FFT(m FFT f); ``m`` is an array or a callable of the wavenumber arrays."""
    return f.with_values(fourier.apply_multiplier(f.grid, m, f.values))


def lp_norm(grid: Grid, values: np.ndarray, p: float, weight: Optional[np.ndarray] = None) -> float:
    """Riemann-sum L^p norm with optional density weight; p = inf is the sample max."""
    modulus = np.abs(values)
    if math.isinf(p):
        return float(modulus.max()) if modulus.size else 0.0
    density = modulus ** p * (1.0 if weight is None else weight)
    return float((np.sum(density) * grid.cell_volume) ** (1.0 / p))


# Weyl quantization


def _midpoints(grid: Grid) -> np.ndarray:
    """The doubled lattice of midpoints (x_m + x_n)/2, shape ((2N)^d, d)."""
    half = -grid.half_width + 0.5 * grid.spacing * np.arange(2 * grid.points)
    mesh = np.meshgrid(*([half] * grid.dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def weyl_matrix(a: Symbol, h: float, grid: Grid) -> np.ndarray:
    """Dense matrix of a^w(x, hD) on the grid.

    Entry (m, n) is N^-d sum_k e^{i k (x_m - x_n)} a((x_m + x_n)/2, h k). Offsets
    are taken in the centred range; the Nyquist offset averages its two
    midpoint images so the matrix stays Hermitian for real symbols.
    """
    d, n = grid.dim, grid.points
    if d == 3:
        raise DimensionTooLarge("Weyl quantization is provided for d = 1, 2")
    size = n ** d
    if (2 ** d) * size * size > WEYL_TABLE_LIMIT:
        raise ConfigurationError(
            f"grid with {size} samples is too large for a dense Weyl table; use the metric form"
        )
    mids = _midpoints(grid)
    xi = h * np.stack([k.ravel() for k in grid.wavenumbers], axis=-1)
    samples = np.asarray(a(mids[:, None, :], xi[None, :, :]), dtype=complex)
    samples = samples.reshape((mids.shape[0],) + grid.shape)
    # table[s, r] = sum_k e^{i k r dx} a(mid_s, h k)
    table = size * fourier.ifft(samples, axes=tuple(range(1, d + 1))).reshape(mids.shape[0], size)

    flat = np.arange(size)
    m_idx = np.unravel_index(flat, grid.shape)
    r_centred = [(ri + n // 2) % n - n // 2 for ri in np.unravel_index(flat, grid.shape)]
    m_axes = [mi[:, None] for mi in m_idx]
    r_axes = [ri[None, :] for ri in r_centred]

    r_flat = np.ravel_multi_index([ri % n for ri in r_axes], grid.shape)
    n_flat = np.ravel_multi_index([(mi - ri) % n for mi, ri in zip(m_axes, r_axes)], grid.shape)
    values = np.zeros((size, size), dtype=complex)
    for choice in range(2 ** d):
        weight = np.ones((size, size))
        s_axes = []
        for axis in range(d):
            nyq = r_axes[axis] == -(n // 2)
            if (choice >> axis) & 1:
                weight = weight * np.where(nyq, 0.5, 0.0)
                s_axes.append((2 * m_axes[axis] + r_axes[axis]) % (2 * n))
            else:
                weight = weight * np.where(nyq, 0.5, 1.0)
                s_axes.append((2 * m_axes[axis] - r_axes[axis]) % (2 * n))
        if not np.any(weight):
            continue
        s_flat = np.ravel_multi_index(s_axes, (2 * n,) * d)
        values += weight * table[s_flat, r_flat]
    matrix = np.zeros((size, size), dtype=complex)
    rows = np.broadcast_to(flat[:, None], (size, size))
    matrix[rows, n_flat] = values / size
    return matrix


def weyl_quantize(a: Symbol, h: float, f: GridField) -> GridField:
    """Apply a^w(x, hD) to ``f``."""
    matrix = weyl_matrix(a, h, f.grid)
    return f.with_values((matrix @ f.values.ravel()).reshape(f.grid.shape))


def metric_symbol(metric: Metric) -> Symbol:
    """a(x, xi) = g^jk(x) xi_j xi_k as a Weyl symbol."""

    def a(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x, xi = np.broadcast_arrays(x, xi)
        return principal_symbol(metric, x, xi)

    return a


@dataclass
class LocalizedOperator:
    """A'(h) = (chi_3 a)^w(x, hD) as a dense matrix."""

    grid: Grid
    h: float
    matrix: np.ndarray
    cutoffs: FrequencyCutoffs

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (self.matrix @ values.ravel()).reshape(self.grid.shape)

    def __call__(self, f: GridField) -> GridField:
        return f.with_values(self.apply(f.values))


def localized_operator(
    metric: Metric, cutoffs: FrequencyCutoffs, h: float, grid: Grid
) -> LocalizedOperator:
    """Weyl quantization of chi_3(|xi|) a(x, xi)."""
    a = metric_symbol(metric)

    def symbol(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return cutoffs.chi3(np.linalg.norm(xi, axis=-1)) * a(x, xi)

    return LocalizedOperator(grid=grid, h=h, matrix=weyl_matrix(symbol, h, grid), cutoffs=cutoffs)


def frequency_cutoff(cutoffs: FrequencyCutoffs, level: int, h: float, f: GridField) -> GridField:
    """chi_level(hD) f."""
    return fourier_multiplier(lambda *k: cutoffs.chi(level, h * np.sqrt(sum(kk ** 2 for kk in k))), f)


# Dense weighted Laplacian and its eigendecomposition


def _derivative_matrix(grid: Grid) -> np.ndarray:
    """Real antisymmetric spectral first-derivative matrix on one axis."""
    k = grid.wave_axis.copy()
    k[grid.points // 2] = 0.0
    eye = np.eye(grid.points)
    return np.real(scipy.fft.ifft(1j * k[:, None] * scipy.fft.fft(eye, axis=0), axis=0))


def stiffness_matrix(metric: Metric, grid: Grid) -> np.ndarray:
    """Dense L = -D_j sqrt|g| g^jk D_k, so that -Delta_g = W^-1 L with W = diag sqrt|g|."""
    size = grid.points ** grid.dim
    if size > EIGEN_LIMIT:
        raise DimensionTooLarge(f"dense operators are limited to {EIGEN_LIMIT} samples, got {size}")
    d1 = _derivative_matrix(grid)
    eye = np.eye(grid.points)
    if grid.dim == 1:
        derivs = [d1]
    elif grid.dim == 2:
        derivs = [np.kron(d1, eye), np.kron(eye, d1)]
    else:
        raise DimensionTooLarge("dense operators are provided for d = 1, 2")
    weight = sample_metric(metric, grid).flux_weight
    stiffness = np.zeros((size, size))
    for j in range(grid.dim):
        for k in range(grid.dim):
            stiffness -= derivs[j] @ (weight[j, k].ravel()[:, None] * derivs[k])
    return 0.5 * (stiffness + stiffness.T)


@dataclass(frozen=True)
class EigenBasis:
    """Generalized eigenpairs L v = lambda W v with V^T W V = I."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    weight: np.ndarray

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return self.vectors.T @ (self.weight * values.ravel())

    def synthesize(self, coefficients: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        return (self.vectors @ coefficients).reshape(shape)

    def apply_function(self, fn: Callable[[np.ndarray], np.ndarray], values: np.ndarray) -> np.ndarray:
        return self.synthesize(fn(self.eigenvalues) * self.coefficients(values), values.shape)


_EIGEN_CACHE: Dict[Tuple[Metric, Grid], EigenBasis] = {}
_EIGEN_LOCK = threading.Lock()


def eigen_basis(metric: Metric, grid: Grid) -> EigenBasis:
    """Cached eigendecomposition of -Delta_g in L^2(dg); built once per (metric, grid)."""
    key = (metric, grid)
    basis = _EIGEN_CACHE.get(key)
    if basis is not None:
        return basis
    with _EIGEN_LOCK:
        basis = _EIGEN_CACHE.get(key)
        if basis is None:
            weight = sample_metric(metric, grid).sqrt_det.ravel()
            values, vectors = scipy.linalg.eigh(stiffness_matrix(metric, grid), b=np.diag(weight))
            values = np.clip(values, 0.0, None)
            basis = EigenBasis(eigenvalues=values, vectors=vectors, weight=weight)
            _EIGEN_CACHE[key] = basis
            logger.debug("eigenbasis for %s on %s: %d modes", metric.family.value, grid, values.size)
    return basis


def clear_eigen_cache() -> None:
    with _EIGEN_LOCK:
        _EIGEN_CACHE.clear()


# Heat semigroup and Littlewood-Paley projections


def _heat_crank_nicolson(metric: Metric, f: GridField, t: float, substeps: int) -> np.ndarray:
    """(W + tau/2 L) u+ = (W - tau/2 L) u; W-weighted mass is conserved exactly."""
    grid = f.grid
    sm = sample_metric(metric, grid)
    weight = sm.sqrt_det
    tau = t / substeps
    size = weight.size

    def stiffness(v: np.ndarray) -> np.ndarray:
        return -divergence_form(grid, sm.flux_weight, v.reshape(grid.shape))

    system = LinearOperator(
        (size, size), dtype=complex,
        matvec=lambda v: (weight * v.reshape(grid.shape) + 0.5 * tau * stiffness(v)).ravel(),
    )
    precond_symbol = 1.0 / (1.0 + 0.5 * tau * grid.k_squared)
    precond = LinearOperator(
        (size, size), dtype=complex,
        matvec=lambda v: fourier.apply_multiplier(grid, precond_symbol, v.reshape(grid.shape)).ravel(),
    )
    u = f.values.copy()
    for _ in range(substeps):
        rhs = (weight * u - 0.5 * tau * stiffness(u)).ravel()
        sol, info = cg(system, rhs, x0=u.ravel(), rtol=settings.CG_RTOL, atol=0.0,
                       maxiter=settings.CG_MAXITER, M=precond)
        if info != 0:
            raise SolverDiverged(f"heat CG did not converge (info={info})")
        u = sol.reshape(grid.shape)
    return u


def heat_semigroup(
    metric: Metric, f: GridField, t: float, method: str = "auto", substeps: Optional[int] = None
) -> GridField:
    """e^{t Delta_g} f for t >= 0."""
    if t < 0:
        raise ConfigurationError("heat flow runs forward in time only")
    if method not in HEAT_METHODS:
        raise ConfigurationError(f"unknown heat method {method!r}")
    if t == 0.0:
        return f.copy()
    if method == "auto":
        if metric.is_flat:
            method = "fourier"
        elif f.grid.dim <= 2 and f.grid.points ** f.grid.dim <= EIGEN_LIMIT:
            method = "eigen"
        else:
            method = "crank_nicolson"
    if method == "fourier":
        if not metric.is_flat:
            raise ConfigurationError("the Fourier heat multiplier requires the flat metric")
        return fourier_multiplier(np.exp(-t * f.grid.k_squared), f)
    if method == "eigen":
        basis = eigen_basis(metric, f.grid)
        return f.with_values(basis.apply_function(lambda lam: np.exp(-t * lam), f.values))
    return f.with_values(
        _heat_crank_nicolson(metric, f, t, substeps or settings.HEAT_SUBSTEPS)
    )


def heat_lp_project(
    metric: Metric, level: float, f: GridField, mode: str = "le", method: str = "auto"
) -> GridField:
    """P_{<=N} = e^{Delta_g/N^2} (mode "le") or P_N = e^{Delta_g/N^2} - e^{4 Delta_g/N^2} (mode "eq")."""
    if level <= 0:
        raise ConfigurationError("Littlewood-Paley level must be positive")
    low = heat_semigroup(metric, f, 1.0 / level ** 2, method=method)
    if mode == "le":
        return low
    if mode == "eq":
        return low - heat_semigroup(metric, f, 4.0 / level ** 2, method=method)
    raise ConfigurationError(f"unknown projection mode {mode!r}; expected 'le' or 'eq'")


def dyadic_levels(n_min: float, n_max: float) -> List[float]:
    levels = []
    level = float(n_min)
    while level <= n_max * (1.0 + 1e-12):
        levels.append(level)
        level *= 2.0
    return levels


def lp_partial_sum(
    metric: Metric, f: GridField, n_min: float, n_max: float, method: str = "auto"
) -> Tuple[GridField, float]:
    """e^{4 Delta_g / N_min^2} f + sum of P_N f over the dyadic band, and its L^2 distance from f.

    The sum telescopes to e^{Delta_g / N_max^2} f, so the distance tends to zero as
    N_max grows.
    """
    total = heat_semigroup(metric, f, 4.0 / n_min ** 2, method=method)
    for level in dyadic_levels(n_min, n_max):
        total = total + heat_lp_project(metric, level, f, mode="eq", method=method)
    return total, (f - total).l2_norm()


def bernstein_bank(grid: Grid, seed: int = 0, random_fields: int = 4) -> List[np.ndarray]:
    """Test fields: centred Gaussians of dyadic widths plus smoothed random noise."""
    rng = np.random.default_rng(seed)
    bank = []
    width = 2.0 * grid.spacing
    while width <= grid.length / 8.0:
        bank.append(np.exp(-grid.radius ** 2 / (2.0 * width ** 2)).astype(complex))
        width *= 2.0
    for i in range(random_fields):
        noise = rng.standard_normal(grid.shape)
        cut = grid.nyquist / 2.0 ** (i + 1)
        bank.append(fourier.apply_multiplier(grid, np.exp(-grid.k_squared / cut ** 2), noise))
    return bank


def bernstein_check(
    metric: Metric,
    level: float,
    p: float,
    q: float,
    grid: Grid,
    bank: Optional[Sequence[np.ndarray]] = None,
    method: str = "auto",
) -> float:
    """max over the bank of ||P_{<=N} f||_q / ||f||_p with dg-weighted norms."""
    for exponent in (p, q):
        if exponent not in (1, 2, 6) and not math.isinf(exponent):
            raise ConfigurationError(f"exponent {exponent} not in the supported set {{1, 2, 6, inf}}")
    if p > q:
        raise ConfigurationError("Bernstein check needs p <= q")
    weight = sample_metric(metric, grid).sqrt_det
    bank = bank if bank is not None else bernstein_bank(grid)
    best = 0.0
    for values in bank:
        f = GridField(grid, values)
        projected = heat_lp_project(metric, level, f, mode="le", method=method)
        best = max(best, lp_norm(grid, projected.values, q, weight) / lp_norm(grid, values, p, weight))
    return best


def bernstein_sweep(
    metric: Metric,
    levels: Sequence[float],
    p: float,
    q: float,
    grid: Grid,
    seed: int = 0,
    method: str = "auto",
):
    """Measured ratios over a dyadic ladder and their fitted N-exponent."""
    from ..schemas.reports import BernsteinReport
    from .analysis import fit_decay_slope

    bank = bernstein_bank(grid, seed=seed)
    ratios = [bernstein_check(metric, level, p, q, grid, bank=bank, method=method) for level in levels]
    fit = fit_decay_slope(list(levels), ratios) if len(levels) >= 4 else None
    expected = grid.dim / p - (0.0 if math.isinf(q) else grid.dim / q)
    return BernsteinReport(
        p=p, q=q, levels=[int(v) for v in levels], ratios=ratios, fit=fit, expected_exponent=expected
    )


def spectral_projection(
    metric: Metric, f: GridField, threshold: float, width: float = 0.25, above: bool = True
) -> GridField:
    """Smoothstep projection onto sqrt(-Delta_g) >= threshold (or below it).

    The transition runs over [(1 - width) threshold, threshold].
    """
    lo = (1.0 - width) * threshold

    def profile(k: np.ndarray) -> np.ndarray:
        high = smoothstep((k - lo) / (threshold - lo))
        return high if above else 1.0 - high

    if metric.is_flat:
        return fourier_multiplier(profile(np.sqrt(f.grid.k_squared)), f)
    basis = eigen_basis(metric, f.grid)
    return f.with_values(basis.apply_function(lambda lam: profile(np.sqrt(lam)), f.values))


# Sobolev norms


def gradient_energy(metric: Metric, f: GridField) -> float:
    """int g^jk d_j u conj(d_k u) dg."""
    grad = fourier.gradient(f.grid, f.values)
    sm = sample_metric(metric, f.grid)
    density = np.einsum("jk...,j...,k...->...", sm.flux_weight, grad, np.conj(grad)).real
    return float(np.sum(density) * f.grid.cell_volume)


def sobolev_norm(metric: Metric, f: GridField, s: float, flavor: str = "metric") -> float:
    """||(-Delta)^(s/2) u||_{L^2} (flat flavor) or ||(-Delta_g)^(s/2) u||_{L^2(dg)} (metric flavor)."""
    if s not in (0.0, 0.5, 1.0):
        raise ConfigurationError(f"Sobolev order must be 0, 1/2 or 1, got {s}")
    grid = f.grid
    if flavor == "flat":
        spectrum = fourier.fft(f.values)
        weight = grid.k_squared ** s if s else 1.0
        total = np.sum(weight * np.abs(spectrum) ** 2) * grid.cell_volume / grid.points ** grid.dim
        return float(np.sqrt(total))
    if flavor != "metric":
        raise ConfigurationError(f"unknown Sobolev flavor {flavor!r}")
    if grid.dim == 3 or grid.points ** grid.dim > EIGEN_LIMIT:
        if s == 1.0:
            return math.sqrt(gradient_energy(metric, f))
        raise DimensionTooLarge("fractional metric Sobolev norms need a dense eigenbasis (d <= 2)")
    basis = eigen_basis(metric, grid)
    coeff = basis.coefficients(f.values)
    return float(np.sqrt(np.sum(basis.eigenvalues ** s * np.abs(coeff) ** 2) * grid.cell_volume))
