"""Diagnostic functionals: norms, Morawetz identities, local smoothing, decay slopes and profiles."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.exceptions import (
    ConfigurationError,
    NonPositiveValue,
    StallDetected,
    TooFewPoints,
    TooFewSlices,
)
from ..models.grid import FieldSeries, Grid, GridField
from ..models.metric import Metric
from ..schemas.reports import (
    BourgainMorawetzResult,
    ConcentrationWitness,
    MorawetzReport,
    NormSuite,
    ProfileDecomposition,
    ProfileFrame,
    SlopeFit,
)
from . import fourier
from .geometry import christoffel, laplace_beltrami, sample_metric
from .phase_space import wrapped_offset
from .propagate import energy, flat_propagate, propagate_series
from .spectral import gradient_energy, heat_lp_project, lp_norm, spectral_projection

logger = logging.getLogger(__name__)


def fit_decay_slope(
    parameters: Sequence[float], values: Sequence[float], confidence: float = 0.95
) -> SlopeFit:
    """Least-squares slope of log(value) against log(parameter) with a t-based confidence width."""
    x = np.asarray(parameters, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size != y.size:
        raise ConfigurationError("parameters and values differ in length")
    if x.size < 4:
        raise TooFewPoints(f"slope fit needs at least 4 points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveValue("slope fit needs positive parameters and values")
    fit = stats.linregress(np.log(x), np.log(y))
    quantile = stats.t.ppf(0.5 + 0.5 * confidence, x.size - 2)
    return SlopeFit(
        slope=float(fit.slope),
        width=float(quantile * fit.stderr),
        intercept=float(fit.intercept),
        points=int(x.size),
        r_value=float(fit.rvalue),
    )


def log_slope(parameters: Sequence[float], values: Sequence[float]) -> Optional[SlopeFit]:
    """fit_decay_slope when 4 or more points exist; a bare log-log slope (no width) for 2 or 3."""
    if len(parameters) >= 4:
        return fit_decay_slope(parameters, values)
    if len(parameters) < 2:
        return None
    x = np.log(np.asarray(parameters, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonPositiveValue("slope fit needs positive parameters and values")
    slope, intercept = np.polyfit(x, y, 1)
    return SlopeFit(slope=float(slope), width=math.inf, intercept=float(intercept), points=len(x))


def japanese_bracket(r: np.ndarray) -> np.ndarray:
    """<x> = (1 + |x|^2)^(1/2)."""
    return np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


def bracket_laplacian(r: np.ndarray, dim: int) -> np.ndarray:
    """Delta <x> = (d - 1)/<x> + 1/<x>^3."""
    b = japanese_bracket(r)
    return (dim - 1) / b + b ** -3


def bracket_bilaplacian(r: np.ndarray, dim: int) -> np.ndarray:
    """Delta^2 <x>; equals -15 <x>^-7 + O(<x>^-5) terms, and -15 at the origin in d = 3."""
    b = japanese_bracket(r)
    return (
        (dim - 1) * ((3 - dim) * b ** -3 - 3.0 * b ** -5)
        + (15 - 3 * dim) * b ** -5
        - 15.0 * b ** -7
    )


def bracket_hessian(points: np.ndarray) -> np.ndarray:
    """d_j d_k <x> = P_theta / <x> + P_r / <x>^3, shape (..., d, d)."""
    x = np.asarray(points, dtype=float)
    b = japanese_bracket(np.linalg.norm(x, axis=-1))
    eye = np.eye(x.shape[-1])
    return eye / b[..., None, None] - x[..., :, None] * x[..., None, :] / b[..., None, None] ** 3


def smooth_transition(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    left = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    right = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return left / (left + right)


def _distance(grid: Grid, center: Sequence[float]) -> np.ndarray:
    return np.sqrt(sum(o ** 2 for o in wrapped_offset(grid, np.asarray(center, dtype=float))))


def smooth_window(grid: Grid, center: Sequence[float], inner: float, outer: float) -> np.ndarray:
    """1 within ``inner`` of ``center``, 0 beyond ``outer`` (periodic distance), C-infinity between."""
    r = _distance(grid, center)
    return 1.0 - smooth_transition((r - inner) / (outer - inner))


def _time_weights(times: np.ndarray) -> np.ndarray:
    """Trapezoid weights."""
    if len(times) < 2:
        return np.zeros(len(times))
    gaps = np.diff(times)
    weights = np.zeros(len(times))
    weights[:-1] += 0.5 * gaps
    weights[1:] += 0.5 * gaps
    return weights


def norm_suite(series: FieldSeries, metric: Metric, exponent: int = 5) -> NormSuite:
    """Per-slice L^2, L^6, L^inf, ||grad u|| and the Z (L^10 L^10), N (L^2 L^6/5) and Y proxies."""
    grid = series.grid
    weight = sample_metric(metric, grid).sqrt_det
    l2, l6, linf, grad = [], [], [], []
    z_acc = n_acc = y_acc = 0.0
    tw = _time_weights(series.times)
    for i in range(len(series)):
        u = series.values[i]
        l2.append(lp_norm(grid, u, 2, weight))
        l6.append(lp_norm(grid, u, 6, weight))
        linf.append(lp_norm(grid, u, math.inf))
        grad.append(math.sqrt(gradient_energy(metric, GridField(grid, u))))
        z_acc += tw[i] * np.sum(weight * np.abs(u) ** 10) * grid.cell_volume
        forcing = np.abs(u) ** (exponent - 1) * u
        n_acc += tw[i] * lp_norm(grid, forcing, 6.0 / 5.0, weight) ** 2
        gradient = np.sqrt(sum(np.abs(g) ** 2 for g in fourier.gradient(grid, u)))
        y_acc += tw[i] * lp_norm(grid, gradient, 30.0 / 13.0, weight) ** 10
    return NormSuite(
        times=[float(t) for t in series.times],
        l2=l2, l6=l6, linf=linf, grad_l2=grad,
        z_proxy=float(z_acc ** 0.1),
        n_proxy=float(math.sqrt(n_acc)),
        y_proxy=float(y_acc ** 0.1),
    )


# Morawetz


def morawetz_weight(grid: Grid, radius: float) -> np.ndarray:
    """a_R = <x> chi(|x|/R), chi = 1 on [0, 1] and 0 beyond 2."""
    if 2.0 * radius >= grid.half_width:
        raise ConfigurationError("Morawetz weight support must fit inside the box")
    return japanese_bracket(grid.radius) * (1.0 - smooth_transition(grid.radius / radius - 1.0))


def _weight_derivatives(metric: Metric, grid: Grid, weight: np.ndarray):
    """grad a, covariant Hessian D^2 a, Delta_g a and Delta_g^2 a on the grid."""
    grad = fourier.gradient(grid, weight).real
    hess = fourier.hessian(grid, weight).real
    if not metric.is_flat:
        gamma = christoffel(metric, grid.points_array)
        hess = hess - np.einsum("...mjk,m...->jk...", gamma, grad)
    lap = laplace_beltrami(metric, GridField(grid, weight)).values.real
    bilap = laplace_beltrami(metric, GridField(grid, lap)).values.real
    return grad, hess, lap, bilap


def morawetz_report(
    series: FieldSeries, metric: Metric, radius: float, mu: int = 0, exponent: int = 5
) -> MorawetzReport:
    """Compare d^2 M/dt^2 (second differences) with the right side of the Morawetz identity."""
    if len(series) < 5:
        raise TooFewSlices(f"Morawetz report needs at least 5 slices, got {len(series)}")
    steps = np.diff(series.times)
    if not np.allclose(steps, steps[0], rtol=1e-9):
        raise ConfigurationError("Morawetz report needs uniformly spaced slices")
    grid = series.grid
    delta = float(steps[0])
    sm = sample_metric(metric, grid)
    dg = sm.sqrt_det * grid.cell_volume
    a = morawetz_weight(grid, radius)
    grad_a, hess_a, lap_a, bilap_a = _weight_derivatives(metric, grid, a)
    g_inv = sm.g_inv
    nonlinear_coeff = 2.0 * (exponent - 1) / (exponent + 1)

    action, first, hess_term, bilap_term, nonlin_term, bounds = [], [], [], [], [], []
    for i in range(len(series)):
        u = series.values[i]
        du = fourier.gradient(grid, u)
        raised = np.einsum("jk...,k...->j...", g_inv, du)
        density = np.abs(u) ** 2
        action.append(float(np.sum(a * density * dg)))
        flux = np.einsum("j...,jk...,k...->...", grad_a, g_inv, du)
        first.append(float(2.0 * np.sum(np.imag(np.conj(u) * flux) * dg)))
        hess_term.append(float(4.0 * np.sum(np.real(
            np.einsum("jk...,j...,k...->...", hess_a, np.conj(raised), raised)) * dg)))
        bilap_term.append(float(-np.sum(bilap_a * density * dg)))
        nonlin_term.append(float(nonlinear_coeff * mu * np.sum(lap_a * np.abs(u) ** (exponent + 1) * dg)))
        grad_norm = math.sqrt(max(gradient_energy(metric, GridField(grid, u)), 0.0))
        l2 = math.sqrt(float(np.sum(density * dg)))
        bounds.append(abs(first[-1]) / (grad_norm * l2) if grad_norm * l2 > 0 else 0.0)

    action_arr = np.array(action)
    second = (action_arr[2:] - 2.0 * action_arr[1:-1] + action_arr[:-2]) / delta ** 2
    rhs = (np.array(hess_term) + np.array(bilap_term) + np.array(nonlin_term))[1:-1]
    residual = np.abs(second - rhs)
    return MorawetzReport(
        radius=radius,
        times=[float(t) for t in series.times[1:-1]],
        action=action,
        second_derivative=second.tolist(),
        hessian_term=hess_term[1:-1],
        bilaplacian_term=bilap_term[1:-1],
        nonlinear_term=nonlin_term[1:-1],
        residual=residual.tolist(),
        max_residual=float(residual.max()),
        derivative_bound=float(max(bounds)),
    )


def bourgain_density(metric: Metric, u: GridField, radius: float) -> float:
    """int_{|x| <= radius} |u|^6 / <x> dg."""
    grid = u.grid
    weight = sample_metric(metric, grid).sqrt_det * (grid.radius <= radius) / japanese_bracket(grid.radius)
    return float(np.sum(weight * np.abs(u.values) ** 6) * grid.cell_volume)


def bourgain_morawetz_ratio(
    series: FieldSeries, metric: Metric, exponent: int = 5, mu: int = 1
) -> BourgainMorawetzResult:
    """int_I int_{|x| <= |I|^(1/2)} |u|^6 / <x> dg dt over |I|^(1/2) E(u(inf I))."""
    length = float(series.times[-1] - series.times[0])
    per_slice = [
        bourgain_density(metric, series.slice(i), math.sqrt(length)) for i in range(len(series))
    ]
    return bourgain_result(series.times, per_slice, energy(metric, series.slice(0), exponent, mu))


def bourgain_result(
    times: Sequence[float], densities: Sequence[float], initial_energy: float
) -> BourgainMorawetzResult:
    """Trapezoid time integral of per-slice densities; 0/0 is guarded by the degenerate flag."""
    times = np.asarray(times, dtype=float)
    length = float(times[-1] - times[0])
    raw = float(np.dot(_time_weights(times), densities))
    if initial_energy <= 0.0 or length <= 0.0:
        return BourgainMorawetzResult(interval_length=length, raw_integral=raw, energy=initial_energy,
                                      ratio=0.0, degenerate=True)
    return BourgainMorawetzResult(
        interval_length=length,
        raw_integral=raw,
        energy=initial_energy,
        ratio=raw / (math.sqrt(length) * initial_energy),
    )


def bourgain_morawetz_sweep(
    series: FieldSeries, metric: Metric, lengths: Sequence[float], exponent: int = 5, mu: int = 1
) -> Tuple[List[BourgainMorawetzResult], Optional[SlopeFit]]:
    """Ratios over nested intervals [t_0, t_0 + |I|] of one stored run and the |I|-exponent of the raw integral."""
    results = []
    start = float(series.times[0])
    for length in lengths:
        window = series.window(start, start + length)
        if len(window) < 2:
            raise TooFewSlices(f"interval of length {length} holds fewer than 2 slices")
        results.append(bourgain_morawetz_ratio(window, metric, exponent, mu))
    usable = [r for r in results if r.raw_integral > 0]
    fit = log_slope([r.interval_length for r in usable], [r.raw_integral for r in usable])
    return results, fit


# Local smoothing


def smoothing_probe_packet(
    grid: Grid, level: float, band: float, tube_radius: float = 16.0,
    center: Optional[Sequence[float]] = None,
) -> GridField:
    """H^1-normalized packet at frequency 2 B N along the first axis with width R / (4N)."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    width = tube_radius / (4.0 * level)
    offset = wrapped_offset(grid, center)
    r2 = sum(o ** 2 for o in offset)
    values = np.exp(-r2 / (2.0 * width ** 2) + 2j * band * level * offset[0])
    u = GridField(grid, values)
    return u * (1.0 / math.sqrt(gradient_energy(Metric(dim=grid.dim), u)))


def local_smoothing_functional(
    metric: Metric,
    phi: GridField,
    level: float,
    band: float,
    window: float,
    tube_radius: float,
    center: Optional[Sequence[float]] = None,
    t0: float = 0.0,
    slices: int = 201,
    dt: Optional[float] = None,
) -> float:
    """||grad e^{it Delta_g} P_{>BN} phi|| in L^2 over |t - t0| <= T N^-2, |x - x0| <= R N^-1."""
    grid = phi.grid
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    projected = spectral_projection(metric, phi, band * level, above=True)
    half = window / level ** 2
    times = np.linspace(t0 - half, t0 + half, slices)
    step = dt or (times[1] - times[0])
    forward = [t for t in times if t >= 0.0]
    backward = [t for t in times if t < 0.0][::-1]
    values: Dict[float, np.ndarray] = {}
    for ladder in (forward, backward):
        if not ladder:
            continue
        if metric.is_flat:
            for t in ladder:
                values[t] = flat_propagate(projected, t).values
        else:
            series = propagate_series(metric, projected, ladder, step)
            for t, v in zip(ladder, series.values):
                values[t] = v
    tube = _distance(grid, center) <= tube_radius / level
    sm = sample_metric(metric, grid)
    weight = sm.sqrt_det * tube * grid.cell_volume
    tw = _time_weights(times)
    total = 0.0
    for w, t in zip(tw, times):
        du = fourier.gradient(grid, values[t])
        density = np.einsum("jk...,j...,k...->...", sm.g_inv, du, np.conj(du)).real
        total += w * float(np.sum(density * weight))
    return math.sqrt(max(total, 0.0))


# Concentration witness and profiles


def witness_time_ladder(step: float, count: int) -> List[float]:
    """{0} together with +-2^k step for k < count."""
    ladder = [0.0]
    for k in range(count):
        ladder.extend([step * 2 ** k, -step * 2 ** k])
    return ladder


def _evolve_to(metric: Metric, f: GridField, t: float, dt: float) -> GridField:
    if t == 0.0:
        return f
    if metric.is_flat:
        return flat_propagate(f, t)
    return propagate_series(metric, f, [t], dt).slice(0)


def inverse_strichartz_witness(
    metric: Metric,
    f: GridField,
    epsilon: float,
    bound: float,
    levels: Sequence[float],
    times: Sequence[float] = (0.0,),
    dt: float = 1e-3,
    threads: int = 1,
) -> ConcentrationWitness:
    """Maximize N^(-(d-2)/2) |(P_N)^2 e^{it Delta_g} f(x)| over the (t, N) ladders and all grid x."""
    grid = f.grid
    d = grid.dim
    evolved = {t: _evolve_to(metric, f, t, dt) for t in times}
    jobs = [(i, t, n) for i, (t, n) in enumerate((t, n) for t in times for n in levels)]

    def work(job):
        index, t, n = job
        once = heat_lp_project(metric, n, evolved[t], mode="eq")
        twice = heat_lp_project(metric, n, once, mode="eq")
        amplitude = n ** (-(d - 2) / 2.0) * np.abs(twice.values)
        flat_index = int(np.argmax(amplitude))
        return float(amplitude.ravel()[flat_index]), -index, t, n, flat_index

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(work, jobs))
    value, _, t_star, n_star, flat_index = max(results)
    point = grid.points_array.reshape(-1, d)[flat_index]
    proxy = n_star ** ((d - 2) / 2.0) * epsilon ** 2.25 * bound ** -1.25 if epsilon > 0 and bound > 0 else 0.0
    return ConcentrationWitness(
        witness_t=float(t_star),
        witness_x=[float(c) for c in point],
        witness_N=float(n_star),
        value=value,
        proxy=float(proxy),
        ratio=float(value / proxy) if proxy > 0 else 0.0,
    )


def h1_norm(metric: Metric, f: GridField) -> float:
    return math.sqrt(max(gradient_energy(metric, f), 0.0))


def greedy_profile_extract(
    metric: Metric,
    f: GridField,
    max_bubbles: int,
    levels: Sequence[float],
    times: Sequence[float] = (0.0,),
    dt: float = 1e-3,
    stop_ratio: float = 0.2,
    strict: bool = False,
    threads: int = 1,
) -> ProfileDecomposition:
    """Peel off windowed bubbles at witness frames until the witness falls below ``stop_ratio`` of the first."""
    if max_bubbles > 8:
        raise ConfigurationError("at most 8 bubbles are extracted")
    input_norm = h1_norm(metric, f)
    remainder = f.copy()
    frames: List[ProfileFrame] = []
    step_norms: List[float] = []
    stalled = False
    first_value = None
    if input_norm == 0.0:
        return ProfileDecomposition(frames=[], input_norm=0.0, remainder_norm=0.0, step_norms=[],
                                    decoupling_defect=0.0)
    bubble_energy = 0.0
    for _ in range(max_bubbles):
        witness = inverse_strichartz_witness(metric, remainder, 0.0, 0.0, levels, times, dt, threads)
        if first_value is None:
            first_value = witness.value
        elif witness.value < stop_ratio * first_value:
            break
        scale = 1.0 / witness.witness_N
        moved = _evolve_to(metric, remainder, witness.witness_t, dt)
        window = smooth_window(f.grid, witness.witness_x, 8.0 * scale, 12.0 * scale)
        bubble = _evolve_to(metric, moved.with_values(window * moved.values), -witness.witness_t, dt)
        candidate = remainder - bubble
        before, after = h1_norm(metric, remainder), h1_norm(metric, candidate)
        if before - after < 0.01 * before:
            stalled = True
            message = f"extraction step removed {100.0 * (before - after) / before:.2f}% of the remainder"
            if strict:
                raise StallDetected(message)
            logger.warning("%s; returning partial decomposition", message)
            break
        norm = h1_norm(metric, bubble)
        frames.append(ProfileFrame(scale=scale, center=witness.witness_x, time=witness.witness_t, norm=norm))
        step_norms.append(after)
        bubble_energy += norm ** 2
        remainder = candidate
        logger.info("bubble %d: lambda=%g x=%s t=%g remainder=%.4g",
                    len(frames), scale, witness.witness_x, witness.witness_t, after)
    remainder_norm = h1_norm(metric, remainder)
    defect = abs(input_norm ** 2 - bubble_energy - remainder_norm ** 2) / input_norm ** 2
    return ProfileDecomposition(
        frames=frames,
        input_norm=input_norm,
        remainder_norm=remainder_norm,
        step_norms=step_norms,
        decoupling_defect=defect,
        stalled=stalled,
    )


def synthetic_bubble(
    grid: Grid, scale: float, center: Sequence[float], amplitude: float = 1.0
) -> GridField:
    """H^1-critical Gaussian bubble scale^(-(d-2)/2) phi((x - x0)/scale)."""
    r2 = _distance(grid, center) ** 2
    values = amplitude * scale ** (-(grid.dim - 2) / 2.0) * np.exp(-r2 / (2.0 * scale ** 2))
    return GridField(grid, values.astype(complex), provenance={"scale": scale, "center": list(center)})
