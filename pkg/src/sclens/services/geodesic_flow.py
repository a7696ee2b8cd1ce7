"""Bicharacteristic flow of a(x, xi) = g^jk xi_j xi_k, nontrapping probes and preimage measures."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from ..core.config import settings
from ..core.exceptions import (
    ConfigurationError,
    EmptyInput,
    InsufficientSamples,
    LeftDomain,
    StepTooLarge,
)
from ..models.metric import Metric
from ..models.phase import FlowTrajectory, PhasePoint
from ..schemas.reports import (
    MeasureEstimate,
    NontrappingReport,
    PreimageSweep,
    RefocusingScan,
)

logger = logging.getLogger(__name__)

FLOW_METHODS = ("rk4", "verlet")
CHUNK = 16384


def hamiltonian_field(
    metric: Metric, x: np.ndarray, xi: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a_xi, -a_x, a) for batches of shape (n, d)."""
    g_inv = metric.g_inv(x)
    dg_inv = metric.dg_inv(x)
    a_xi = 2.0 * np.einsum("njk,nk->nj", g_inv, xi)
    a_x = np.einsum("nljk,nj,nk->nl", dg_inv, xi, xi)
    a = 0.5 * np.einsum("nj,nj->n", a_xi, xi)
    return a_xi, -a_x, a


def symbol(metric: Metric, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return np.einsum("njk,nj,nk->n", metric.g_inv(x), xi, xi)


def _rk4_step(metric: Metric, x, xi, dt):
    def rhs(xx, kk):
        vx, vk, a = hamiltonian_field(metric, xx, kk)
        # gamma' = xi . a_xi - a
        return vx, vk, np.einsum("nj,nj->n", kk, vx) - a

    k1 = rhs(x, xi)
    k2 = rhs(x + 0.5 * dt * k1[0], xi + 0.5 * dt * k1[1])
    k3 = rhs(x + 0.5 * dt * k2[0], xi + 0.5 * dt * k2[1])
    k4 = rhs(x + dt * k3[0], xi + dt * k3[1])
    x_new = x + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    xi_new = xi + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    dgamma = np.ravel(dt) / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return x_new, xi_new, dgamma


def _verlet_step(metric: Metric, x, xi, dt, iterations: int = 50):
    """Generalized leapfrog; both implicit stages solved by fixed-point iteration."""
    half = 0.5 * dt
    _, force, a_start = hamiltonian_field(metric, x, xi)
    xi_half = xi + half * force
    for _ in range(iterations):
        _, force, _ = hamiltonian_field(metric, x, xi_half)
        nxt = xi + half * force
        done = np.max(np.abs(nxt - xi_half)) <= 1e-15 * (1.0 + np.max(np.abs(nxt)))
        xi_half = nxt
        if done:
            break
    v_start, _, _ = hamiltonian_field(metric, x, xi_half)
    x_new = x + dt * v_start
    for _ in range(iterations):
        v_end, _, _ = hamiltonian_field(metric, x_new, xi_half)
        nxt = x + half * (v_start + v_end)
        done = np.max(np.abs(nxt - x_new)) <= 1e-15 * (1.0 + np.max(np.abs(nxt)))
        x_new = nxt
        if done:
            break
    _, force, _ = hamiltonian_field(metric, x_new, xi_half)
    xi_new = xi_half + half * force
    a_end = symbol(metric, x_new, xi_new)
    # quadratic in xi, so xi . a_xi - a = a along the path
    dgamma = np.ravel(dt) * 0.5 * (a_start + a_end)
    return x_new, xi_new, dgamma


def _stepper(method: str):
    if method == "rk4":
        return _rk4_step
    if method == "verlet":
        return _verlet_step
    raise ConfigurationError(f"unknown flow method {method!r}; expected one of {FLOW_METHODS}")


def _as_batch(metric: Metric, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and metric.dim == 1 and arr.shape[0] != 1:
        arr = arr[:, None]
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != metric.dim:
        raise ConfigurationError(f"expected {metric.dim} components, got shape {arr.shape}")
    return arr


def flow_batch(
    metric: Metric,
    x: np.ndarray,
    xi: np.ndarray,
    t: float,
    dt: float = 1e-3,
    method: str = "rk4",
    domain: Optional[float] = None,
    tol: Optional[float] = None,
    record: bool = False,
):
    """Integrate many rays to time ``t``; negative ``t`` integrates backwards.

    Returns (x_t, xi_t, gamma_t, trajectory-or-None). The trajectory is recorded
    for the first ray only.
    """
    if dt <= 0:
        raise ConfigurationError("flow step must be positive")
    tol = settings.FLOW_TOL if tol is None else tol
    step = _stepper(method)
    x = _as_batch(metric, x).copy()
    xi = _as_batch(metric, xi).copy()
    steps = max(1, int(math.ceil(abs(t) / dt - 1e-9))) if t != 0 else 0
    h = t / steps if steps else 0.0
    a0 = symbol(metric, x, xi)
    scale = np.where(a0 > 0.0, a0, 1.0)
    gamma = np.zeros(x.shape[0])
    history = [(0.0, x[0].copy(), xi[0].copy(), float(a0[0]), 0.0)] if record else None
    for i in range(steps):
        x, xi, dg = step(metric, x, xi, h)
        gamma += dg
        if domain is not None and np.max(np.abs(x)) > domain:
            raise LeftDomain(f"ray left the box |x| <= {domain} at t = {(i + 1) * h:.6g}")
        if record:
            history.append(((i + 1) * h, x[0].copy(), xi[0].copy(),
                            float(symbol(metric, x[:1], xi[:1])[0]), float(gamma[0])))
    a_t = symbol(metric, x, xi)
    drift = float(np.max(np.abs(a_t - a0) / scale)) if x.size else 0.0
    if drift > 100.0 * tol:
        raise StepTooLarge(f"symbol drift {drift:.3e} exceeds {100.0 * tol:.1e}; reduce dt")
    trajectory = None
    if record:
        trajectory = FlowTrajectory(
            times=np.array([r[0] for r in history]),
            x=np.array([r[1] for r in history]),
            xi=np.array([r[2] for r in history]),
            symbol=np.array([r[3] for r in history]),
            gamma=np.array([r[4] for r in history]),
        )
    return x, xi, gamma, trajectory


def flow(
    metric: Metric,
    p0: PhasePoint,
    t: float,
    dt: float = 1e-3,
    method: str = "rk4",
    record: bool = False,
    domain: Optional[float] = None,
    tol: Optional[float] = None,
) -> Union[PhasePoint, Tuple[PhasePoint, FlowTrajectory]]:
    """Flow one phase point for time ``t``; with ``record`` also return the trajectory."""
    x, xi, _, trajectory = flow_batch(
        metric, p0.x[None, :], p0.xi[None, :], t, dt=dt, method=method,
        domain=domain, tol=tol, record=record,
    )
    end = PhasePoint(x[0], xi[0])
    if record:
        return end, trajectory
    return end


def _uniform_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * (radius * rng.random(n) ** (1.0 / dim))[:, None]


def ball_volume(dim: int, radius: float) -> float:
    return float(math.pi ** (dim / 2.0) / gamma_fn(dim / 2.0 + 1.0) * radius ** dim)


def nontrapping_probe(
    metric: Metric,
    sample_count: int,
    t_max: float,
    epsilon: float = 0.5,
    seed: int = 0,
    step_length: float = 0.02,
    escape_radius: float = 10.0,
) -> NontrappingReport:
    """Launch rays from {|x| <= 1, eps <= |xi|_g <= 1/eps} and time their escape past ``escape_radius``.

    Each ray steps a fixed spatial length, so slow rays take proportionally longer
    time steps.
    """
    rng = np.random.default_rng(seed)
    d = metric.dim
    x = _uniform_ball(rng, sample_count, d, 1.0)
    direction = rng.standard_normal((sample_count, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    speed = epsilon + (1.0 / epsilon - epsilon) * rng.random(sample_count)
    norm_g = np.sqrt(symbol(metric, x, direction))
    xi = direction * (speed / norm_g)[:, None]
    a0 = symbol(metric, x, xi)
    dt = step_length / (2.0 * np.sqrt(a0) * np.sqrt(np.max(metric.g_inv(x), axis=(1, 2))))
    dt = dt[:, None]

    t = np.zeros(sample_count)
    escape = np.full(sample_count, np.nan)
    active = np.linalg.norm(x, axis=1) < escape_radius
    escape[~active] = 0.0
    while np.any(active):
        idx = np.flatnonzero(active)
        step = np.minimum(dt[idx], (t_max - t[idx])[:, None])
        x[idx], xi[idx], _ = _rk4_step(metric, x[idx], xi[idx], step)
        t[idx] += step[:, 0]
        out = np.linalg.norm(x[idx], axis=1) >= escape_radius
        escape[idx[out]] = t[idx[out]]
        active[idx[out]] = False
        active[idx[t[idx] >= t_max - 1e-12]] = False
    drift = float(np.max(np.abs(symbol(metric, x, xi) / a0 - 1.0)))
    stuck = int(np.sum(np.isnan(escape)))
    report = NontrappingReport(
        all_escaped=stuck == 0,
        escape_time=float(np.nanmax(escape)) if stuck < sample_count else float("inf"),
        non_escapers=stuck,
        sample_count=sample_count,
        max_drift=drift,
    )
    if stuck:
        logger.warning("%d of %d rays did not escape by t = %g", stuck, sample_count, t_max)
    return report


def _endpoints_chunk(metric, x, xi_batch, t, dt, method):
    start = np.broadcast_to(np.asarray(x, dtype=float), xi_batch.shape)
    x_end, _, _, _ = flow_batch(metric, start, xi_batch, t, dt=dt, method=method)
    return x_end


def _sample_endpoints(
    metric: Metric,
    x: np.ndarray,
    samples: int,
    xi_max: float,
    seed: Union[int, np.random.SeedSequence],
    xi_center: Optional[np.ndarray],
    dt: float,
    method: str,
    threads: int,
) -> np.ndarray:
    """x^1(x, xi) for xi uniform in a ball; chunked with one RNG stream per chunk."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    n_chunks = max(1, int(math.ceil(samples / CHUNK)))
    children = root.spawn(n_chunks)
    center = np.zeros(metric.dim) if xi_center is None else np.asarray(xi_center, dtype=float)

    def work(i: int) -> np.ndarray:
        n = min(CHUNK, samples - i * CHUNK)
        rng = np.random.default_rng(children[i])
        xi = center + _uniform_ball(rng, n, metric.dim, xi_max)
        return _endpoints_chunk(metric, x, xi, 1.0, dt, method)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(work, range(n_chunks)))
    return np.concatenate(parts, axis=0)


def _estimate(
    endpoints: np.ndarray, z: np.ndarray, r: float, volume: float, seed: int, strict: bool
) -> MeasureEstimate:
    n = endpoints.shape[0]
    hits = int(np.sum(np.linalg.norm(endpoints - z, axis=1) <= r))
    p = hits / n
    reliable = hits >= settings.MIN_HITS
    if not reliable:
        message = f"only {hits} hits for r = {r:g} (need {settings.MIN_HITS})"
        if strict:
            raise InsufficientSamples(message)
        logger.warning("%s; estimate flagged unreliable", message)
    return MeasureEstimate(
        radius=float(r),
        measure=volume * p,
        stderr=volume * math.sqrt(p * (1.0 - p) / n),
        hits=hits,
        samples=n,
        reliable=reliable,
        seed=int(seed),
    )


def preimage_measure(
    metric: Metric,
    x: Sequence[float],
    z: Sequence[float],
    r: float,
    samples: int,
    xi_max: float,
    seed: int = 0,
    xi_center: Optional[Sequence[float]] = None,
    dt: float = 1e-2,
    method: str = "rk4",
    threads: int = 1,
    strict: bool = False,
) -> MeasureEstimate:
    """Monte-Carlo estimate of m({xi : |x^1(x, xi) - z| <= r}) over a ball of radius ``xi_max``."""
    x_arr = np.asarray(x, dtype=float).reshape(metric.dim)
    if np.linalg.norm(x_arr) > 1.0:
        raise ConfigurationError("base point must satisfy |x| <= 1")
    if not 0.0 < r <= 1.0:
        raise ConfigurationError(f"radius must lie in (0, 1], got {r}")
    endpoints = _sample_endpoints(
        metric, x_arr, samples, xi_max, seed,
        None if xi_center is None else np.asarray(xi_center, dtype=float), dt, method, threads,
    )
    z_arr = np.asarray(z, dtype=float).reshape(metric.dim)
    return _estimate(endpoints, z_arr, r, ball_volume(metric.dim, xi_max), seed, strict)


def preimage_sweep(
    metric: Metric,
    x: Sequence[float],
    z: Sequence[float],
    radii: Sequence[float],
    samples: int,
    xi_max: float,
    seed: int = 0,
    xi_center: Optional[Sequence[float]] = None,
    reuse_rays: bool = False,
    dt: float = 1e-2,
    method: str = "rk4",
    threads: int = 1,
    strict: bool = False,
) -> PreimageSweep:
    """Preimage measures over a radius ladder and the fitted r-exponent.

    With ``reuse_rays`` one set of endpoints serves every radius; otherwise each
    radius draws its own stream spawned from ``seed``.
    """
    from .analysis import fit_decay_slope

    if not radii:
        raise EmptyInput("radius ladder is empty")
    x_arr = np.asarray(x, dtype=float).reshape(metric.dim)
    z_arr = np.asarray(z, dtype=float).reshape(metric.dim)
    center = None if xi_center is None else np.asarray(xi_center, dtype=float)
    volume = ball_volume(metric.dim, xi_max)
    estimates: List[MeasureEstimate] = []
    if reuse_rays:
        endpoints = _sample_endpoints(metric, x_arr, samples, xi_max, seed, center, dt, method, threads)
        estimates = [_estimate(endpoints, z_arr, r, volume, seed, strict) for r in radii]
    else:
        streams = np.random.SeedSequence(seed).spawn(len(radii))
        for r, stream in zip(radii, streams):
            endpoints = _sample_endpoints(
                metric, x_arr, samples, xi_max, stream, center, dt, method, threads
            )
            estimates.append(_estimate(endpoints, z_arr, r, volume, seed, strict))
    fit = None
    usable = [e for e in estimates if e.measure > 0.0]
    if len(usable) >= 4:
        fit = fit_decay_slope([e.radius for e in usable], [e.measure for e in usable])
    for e in estimates:
        logger.info("preimage r=%g m=%.6g +- %.2g hits=%d", e.radius, e.measure, e.stderr, e.hits)
    return PreimageSweep(estimates=estimates, fit=fit, reuse_rays=reuse_rays)


def refocusing_scan(
    metric: Metric,
    x: Sequence[float],
    xi_grid: np.ndarray,
    bins: int = 64,
    extent: Optional[float] = None,
    t: float = 1.0,
    dt: float = 1e-2,
) -> RefocusingScan:
    """Histogram of x^t(x, xi) over ``xi_grid`` against the flat pushforward xi -> x + 2 t xi."""
    xi_grid = np.asarray(xi_grid, dtype=float)
    if xi_grid.size == 0:
        raise EmptyInput("covector grid is empty")
    xi_batch = _as_batch(metric, xi_grid)
    x_arr = np.asarray(x, dtype=float).reshape(metric.dim)
    endpoints = _endpoints_chunk(metric, x_arr, xi_batch, t, dt, "rk4")
    straight = x_arr + 2.0 * t * xi_batch
    if extent is None:
        extent = 1.1 * float(max(np.max(np.abs(endpoints - x_arr)), np.max(np.abs(straight - x_arr))))
    ranges = [(c - extent, c + extent) for c in x_arr]
    counts, edges = np.histogramdd(endpoints, bins=bins, range=ranges)
    reference, _ = np.histogramdd(straight, bins=bins, range=ranges)
    occupied = reference[reference > 0]
    ref_max = float(reference.max()) if reference.size else 0.0
    return RefocusingScan(
        counts=counts,
        reference=reference,
        edges=list(edges),
        peak_ratio=float(counts.max()) / ref_max if ref_max else 0.0,
        uniform_ratio=float(counts.max() / occupied.mean()) if occupied.size else 0.0,
    )


def annulus_grid(dim: int, inner: float, outer: float, radial: int, angular: int) -> np.ndarray:
    """Covectors on a polar lattice covering inner <= |xi| <= outer (equal-area radial spacing)."""
    if dim == 1:
        radii = np.linspace(inner, outer, radial)
        return np.concatenate([-radii[::-1], radii])[:, None]
    if dim != 2:
        raise ConfigurationError("annulus lattice is provided for d = 1, 2")
    radii = np.sqrt(np.linspace(inner ** 2, outer ** 2, radial))
    angles = 2.0 * np.pi * (np.arange(angular) + 0.5) / angular
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    return np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1).reshape(-1, 2)
