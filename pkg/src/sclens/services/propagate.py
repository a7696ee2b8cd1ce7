"""Time evolution: free and metric Schrodinger propagators, the defocusing NLS, Picard iteration."""

import logging
import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ..core.config import settings
from ..core.exceptions import (
    Blowup,
    BoundaryContaminated,
    ConfigurationError,
    NotContracting,
    SolverDiverged,
    StepTooLarge,
)
from ..models.cutoffs import FrequencyCutoffs
from ..models.grid import FieldSeries, Grid, GridField
from ..models.metric import Metric
from ..models.state import EvolutionState, NLSProblem
from ..schemas.reports import PicardReport, ScatteringTable
from . import fourier
from .geometry import conjugated_operator, sample_metric, semiclassical_apply
from .spectral import gradient_energy, localized_operator, lp_norm, sobolev_norm

logger = logging.getLogger(__name__)

SCHEMES = ("auto", "crank_nicolson", "strang")


def flat_propagate(f: GridField, t: float) -> GridField:
    """e^{it Delta} f via the exact multiplier e^{-it|k|^2}."""
    if t == 0.0:
        return f.copy()
    out = f.with_values(fourier.apply_multiplier(f.grid, np.exp(-1j * t * f.grid.k_squared), f.values))
    out.time = (f.time or 0.0) + t
    return out


def cayley_multiplier(symbol: np.ndarray, tau: float) -> np.ndarray:
    """(1 - i tau s/2) / (1 + i tau s/2): one Crank-Nicolson step of e^{-i tau s}."""
    return (1.0 - 0.5j * tau * symbol) / (1.0 + 0.5j * tau * symbol)


# Generators


class Generator(ABC):
    """Self-adjoint H on L^2(dx) with the state map into and out of its natural frame."""

    name = ""

    def __init__(self, metric: Metric, grid: Grid, h: Optional[float] = None,
                 cutoffs: Optional[FrequencyCutoffs] = None):
        if metric.dim != grid.dim:
            raise ConfigurationError("metric and grid dimensions differ")
        self.metric = metric
        self.grid = grid
        self.h = h
        self.cutoffs = cutoffs

    @abstractmethod
    def apply(self, values: np.ndarray) -> np.ndarray:
        """H v."""

    @abstractmethod
    def flat_symbol(self) -> np.ndarray:
        """Symbol of H when the metric is flat; also the preconditioner model."""

    def coefficient_scale(self) -> float:
        """sup of g^jj, the factor between H and its flat model."""
        return float(np.max(sample_metric(self.metric, self.grid).g_inv))

    def coefficient_deviation(self) -> float:
        """sup |g^jk - delta^jk|."""
        g_inv = sample_metric(self.metric, self.grid).g_inv
        eye = np.eye(self.grid.dim).reshape((self.grid.dim,) * 2 + (1,) * self.grid.dim)
        return float(np.max(np.abs(g_inv - eye)))

    def to_frame(self, values: np.ndarray) -> np.ndarray:
        return values

    def from_frame(self, values: np.ndarray) -> np.ndarray:
        return values

    def perturbation(self, values: np.ndarray) -> np.ndarray:
        """H v minus its flat model."""
        return self.apply(values) - fourier.apply_multiplier(self.grid, self.flat_symbol(), values)


class ConjugatedGenerator(Generator):
    """A = -d_j g^jk d_k + V."""

    name = "A"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.operator = conjugated_operator(self.metric, self.grid)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.operator.apply(values)

    def flat_symbol(self) -> np.ndarray:
        return self.grid.k_squared


class LaplaceBeltramiGenerator(ConjugatedGenerator):
    """e^{it Delta_g} = rho^-1 e^{-itA} rho."""

    name = "laplace_beltrami"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.rho = sample_metric(self.metric, self.grid).rho

    def to_frame(self, values: np.ndarray) -> np.ndarray:
        return self.rho * values

    def from_frame(self, values: np.ndarray) -> np.ndarray:
        return values / self.rho


class SemiclassicalGenerator(Generator):
    """A(h)/h in Weyl form."""

    name = "semiclassical"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.h is None or self.h <= 0:
            raise ConfigurationError("semiclassical propagation needs h > 0")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return semiclassical_apply(self.metric, self.grid, self.h, values)

    def flat_symbol(self) -> np.ndarray:
        return self.h * self.grid.k_squared


class LocalizedGenerator(SemiclassicalGenerator):
    """A'(h)/h = (chi_3 a)^w / h."""

    name = "localized"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.cutoffs = self.cutoffs or FrequencyCutoffs()
        self.operator = localized_operator(self.metric, self.cutoffs, self.h, self.grid)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.operator.apply(values) / self.h

    def flat_symbol(self) -> np.ndarray:
        k = np.sqrt(self.grid.k_squared)
        return self.cutoffs.chi3(self.h * k) * self.h * self.grid.k_squared


class GeneratorFactory:
    """Factory for the supported evolution generators."""

    _generators: Dict[str, Type[Generator]] = {
        "laplace_beltrami": LaplaceBeltramiGenerator,
        "A": ConjugatedGenerator,
        "semiclassical": SemiclassicalGenerator,
        "localized": LocalizedGenerator,
    }

    @classmethod
    def create(cls, operator: str, metric: Metric, grid: Grid, h: Optional[float] = None,
               cutoffs: Optional[FrequencyCutoffs] = None) -> Generator:
        """Create a generator for the named operator."""
        generator_class = cls._generators.get(operator)
        if not generator_class:
            raise ConfigurationError(
                f"unsupported operator {operator!r}; expected one of {cls.get_supported_operators()}"
            )
        return generator_class(metric, grid, h=h, cutoffs=cutoffs)

    @classmethod
    def get_supported_operators(cls) -> List[str]:
        """Get list of supported operators."""
        return list(cls._generators.keys())

    @classmethod
    def is_operator_supported(cls, operator: str) -> bool:
        """Check if an operator is supported."""
        return operator in cls._generators


# Steppers


class CayleySolver:
    """(I + i tau H) x = b solved as (I + tau^2 H^2) x = (I - i tau H) b by preconditioned CG."""

    def __init__(self, generator: Generator, apply, flat_symbol: np.ndarray, tau: float, scale: float):
        grid = generator.grid
        size = int(np.prod(grid.shape))
        self.grid = grid
        self.tau = tau
        self.apply_h = apply
        self.iterations = 0

        def normal(v: np.ndarray) -> np.ndarray:
            w = v.reshape(grid.shape)
            return (w + tau ** 2 * self.apply_h(self.apply_h(w))).ravel()

        precond_symbol = 1.0 / (1.0 + (tau * scale * flat_symbol) ** 2)
        self.system = LinearOperator((size, size), dtype=complex, matvec=normal)
        self.precond = LinearOperator(
            (size, size), dtype=complex,
            matvec=lambda v: fourier.apply_multiplier(grid, precond_symbol, v.reshape(grid.shape)).ravel(),
        )

    def step(self, values: np.ndarray) -> np.ndarray:
        """(I + i tau H)^-1 (I - i tau H) values."""
        b = values - 1j * self.tau * self.apply_h(values)
        rhs = b - 1j * self.tau * self.apply_h(b)
        count = [0]

        def callback(_):
            count[0] += 1

        x, info = cg(self.system, rhs.ravel(), x0=values.ravel(), rtol=settings.CG_RTOL, atol=0.0,
                     maxiter=settings.CG_MAXITER, M=self.precond, callback=callback)
        if info != 0:
            raise SolverDiverged(f"Crank-Nicolson CG failed to converge (info={info})")
        self.iterations += count[0]
        return x.reshape(self.grid.shape)


class Stepper:
    """Unitary one-step map for e^{-i dt H}, in the generator's frame."""

    def __init__(self, generator: Generator, dt: float, scheme: str = "auto"):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        self.generator = generator
        self.dt = dt
        flat = generator.metric.is_flat and not isinstance(generator, LocalizedGenerator)
        if flat:
            symbol = generator.flat_symbol()
            if scheme == "crank_nicolson":
                self.multiplier = cayley_multiplier(symbol, dt)
            else:
                self.multiplier = np.exp(-1j * dt * symbol)
            self.kind = "multiplier"
        elif scheme == "strang":
            self.kind = "strang"
            self.half_free = np.exp(-0.5j * dt * generator.flat_symbol())
            scale = generator.coefficient_deviation()
            self.solver = CayleySolver(generator, generator.perturbation, generator.flat_symbol(),
                                       0.5 * dt, max(scale, 1e-3))
        else:
            self.kind = "crank_nicolson"
            self.solver = CayleySolver(generator, generator.apply, generator.flat_symbol(),
                                       0.5 * dt, generator.coefficient_scale())

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if self.kind == "multiplier":
            return fourier.apply_multiplier(self.generator.grid, self.multiplier, values)
        if self.kind == "strang":
            half = fourier.apply_multiplier(self.generator.grid, self.half_free, values)
            half = self.solver.step(half)
            return fourier.apply_multiplier(self.generator.grid, self.half_free, half)
        return self.solver.step(values)


def _check_step(generator: Generator, values: np.ndarray, dt: float, scheme: str) -> None:
    if generator.metric.is_flat and scheme != "crank_nicolson":
        return
    k_ret = fourier.retained_wavenumber(generator.grid, values, settings.RETAINED_AMPLITUDE)
    scale = generator.coefficient_scale() * (generator.h or 1.0)
    bound = 0.5 / max(scale * k_ret ** 2, 1e-300)
    if abs(dt) > bound:
        raise StepTooLarge(
            f"dt = {abs(dt):.3g} exceeds 0.5/|symbol|_max = {bound:.3g} at retained |k| = {k_ret:.3g}"
        )


def _steps(t: float, dt: float) -> Tuple[int, float]:
    if dt <= 0:
        raise ConfigurationError("time step must be positive")
    n = int(math.ceil(abs(t) / dt - 1e-9))
    return n, (t / n if n else 0.0)


def metric_propagate(
    metric: Metric,
    f: GridField,
    t: float,
    dt: float,
    operator: str = "laplace_beltrami",
    scheme: str = "auto",
    h: Optional[float] = None,
    cutoffs: Optional[FrequencyCutoffs] = None,
) -> GridField:
    """Evolve ``f`` for time ``t`` under e^{it Delta_g}, e^{-itA}, e^{-itA(h)/h} or e^{-itA'(h)/h}."""
    series = propagate_series(metric, f, [t], dt, operator=operator, scheme=scheme, h=h, cutoffs=cutoffs)
    return series.slice(len(series) - 1)


def propagate_series(
    metric: Metric,
    f: GridField,
    times: Sequence[float],
    dt: float,
    operator: str = "laplace_beltrami",
    scheme: str = "auto",
    h: Optional[float] = None,
    cutoffs: Optional[FrequencyCutoffs] = None,
) -> FieldSeries:
    """States at each of the (monotone) ``times``, starting from ``f`` at time 0."""
    generator = GeneratorFactory.create(operator, metric, f.grid, h=h, cutoffs=cutoffs)
    times = [float(t) for t in times]
    if not times:
        raise ConfigurationError("no output times requested")
    if times != sorted(times) and times != sorted(times, reverse=True):
        raise ConfigurationError("output times must be monotone")
    _check_step(generator, f.values, dt, scheme)
    state = generator.to_frame(f.values)
    current = 0.0
    out = []
    steppers: Dict[float, Stepper] = {}
    for target in times:
        n, step = _steps(target - current, dt)
        if n:
            key = round(step, 15)
            stepper = steppers.get(key)
            if stepper is None:
                stepper = steppers[key] = Stepper(generator, step, scheme)
            for _ in range(n):
                state = stepper(state)
        current = target
        out.append(generator.from_frame(state))
    iterations = sum(getattr(s, "solver", None).iterations for s in steppers.values()
                     if getattr(s, "solver", None) is not None)
    logger.debug("propagated %s to t=%g (%d CG iterations)", generator.name, current, iterations)
    return FieldSeries(f.grid, np.array(times), np.array(out))


def frozen_propagate(
    coefficients: np.ndarray, f: GridField, t: float, dt: Optional[float] = None
) -> GridField:
    """e^{it g^jk(x_inf) d_j d_k} f; exact, or Crank-Nicolson steps of size ``dt`` when given."""
    coeff = np.atleast_2d(np.asarray(coefficients, dtype=float))
    symbol = np.einsum("jk,j...,k...->...", coeff, np.array(f.grid.wavenumbers), np.array(f.grid.wavenumbers))
    if dt is None:
        return f.with_values(fourier.apply_multiplier(f.grid, np.exp(-1j * t * symbol), f.values))
    n, step = _steps(t, dt)
    multiplier = cayley_multiplier(symbol, step) ** n
    return f.with_values(fourier.apply_multiplier(f.grid, multiplier, f.values))


def propagator_difference(
    metric: Metric,
    phi: GridField,
    times: Sequence[float],
    dt: float,
    reference: str = "flat",
    x_inf: Optional[Sequence[float]] = None,
    norm: str = "L6",
    scheme: str = "crank_nicolson",
) -> float:
    """sup over ``times`` of ||e^{it Delta_g} phi - e^{it Delta_ref} phi|| in L^6 or H^1-dot.

    The reference uses the same Cayley step as the metric run so the difference
    isolates the generator.
    """
    if reference == "flat":
        coeff = np.eye(metric.dim)
    elif reference == "frozen":
        if x_inf is None:
            raise ConfigurationError("frozen reference needs the limit point x_inf")
        coeff = metric.g_inv(np.asarray(x_inf, dtype=float).reshape(1, metric.dim))[0]
    else:
        raise ConfigurationError(f"unknown reference {reference!r}")
    series = propagate_series(metric, phi, times, dt, scheme=scheme)
    worst = 0.0
    flat = Metric(dim=metric.dim)
    for i, t in enumerate(series.times):
        ref = frozen_propagate(coeff, phi, t, dt if scheme == "crank_nicolson" else None)
        diff = series.slice(i) - ref
        if norm == "L6":
            value = lp_norm(phi.grid, diff.values, 6)
        elif norm == "H1":
            value = sobolev_norm(flat, diff, 1.0, flavor="flat")
        else:
            raise ConfigurationError(f"unknown norm {norm!r}")
        worst = max(worst, value)
    return worst


# Diagnostics


def mass(metric: Metric, u: GridField) -> float:
    """int |u|^2 dg."""
    weight = sample_metric(metric, u.grid).sqrt_det
    return float(np.sum(weight * np.abs(u.values) ** 2) * u.grid.cell_volume)


def energy(metric: Metric, u: GridField, exponent: int = 5, mu: int = 1) -> float:
    """int 1/2 g^jk d_j u conj(d_k u) + mu/(p+1) |u|^(p+1) dg."""
    weight = sample_metric(metric, u.grid).sqrt_det
    potential = np.sum(weight * np.abs(u.values) ** (exponent + 1)) * u.grid.cell_volume
    return 0.5 * gradient_energy(metric, u) + mu / (exponent + 1.0) * float(potential)


def initial_state(problem: NLSProblem) -> EvolutionState:
    u = problem.initial
    return EvolutionState(
        field=u.with_values(u.values, time=0.0),
        time=0.0,
        diagnostics={
            "mass": mass(problem.metric, u),
            "energy": energy(problem.metric, u, problem.exponent, problem.mu),
            "max": u.max_norm(),
        },
    )


class NLSStepper:
    """Strang step: half nonlinear phase, full linear step, half nonlinear phase."""

    def __init__(self, problem: NLSProblem, dt: float, scheme: str = "auto"):
        self.problem = problem
        self.dt = dt
        self.generator = GeneratorFactory.create("laplace_beltrami", problem.metric, problem.grid)
        _check_step(self.generator, problem.initial.values, dt, scheme)
        self.linear = Stepper(self.generator, dt, scheme)
        self.ceiling = settings.BLOWUP_FACTOR * max(problem.initial.max_norm(), 1e-300)

    def _phase(self, values: np.ndarray, tau: float) -> np.ndarray:
        p = self.problem
        if p.mu == 0:
            return values
        return values * np.exp(-1j * tau * p.mu * np.abs(values) ** (p.exponent - 1))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        half = self._phase(values, 0.5 * self.dt)
        frame = self.generator.to_frame(half)
        half = self.generator.from_frame(self.linear(frame))
        out = self._phase(half, 0.5 * self.dt)
        peak = float(np.max(np.abs(out)))
        if not np.isfinite(peak) or peak > self.ceiling:
            raise Blowup(f"sup |u| = {peak:.3e} exceeds the ceiling {self.ceiling:.3e}")
        return out


def nls_step(
    problem: NLSProblem, state: EvolutionState, dt: float, stepper: Optional[NLSStepper] = None,
    diagnostics: bool = True,
) -> EvolutionState:
    """Advance ``state`` by one Strang step of size ``dt``."""
    stepper = stepper or NLSStepper(problem, dt)
    values = stepper(state.field.values)
    new = state.advanced(values, dt)
    if diagnostics:
        new.diagnostics = {
            "mass": mass(problem.metric, new.field),
            "energy": energy(problem.metric, new.field, problem.exponent, problem.mu),
            "max": new.field.max_norm(),
        }
    return new


def nls_evolve(
    problem: NLSProblem, t: float, dt: float, record_every: int = 0, scheme: str = "auto"
) -> Tuple[EvolutionState, Optional[FieldSeries], List[Dict[str, float]]]:
    """Run nls_step to time ``t``; returns the final state, optional slices and diagnostics rows."""
    n, step = _steps(t, dt)
    stepper = NLSStepper(problem, step, scheme)
    state = initial_state(problem)
    history = [dict(state.diagnostics, t=0.0)]
    slices_t, slices_v = [0.0], [state.field.values.copy()]
    for i in range(1, n + 1):
        keep = record_every and i % record_every == 0
        state = nls_step(problem, state, step, stepper, diagnostics=bool(keep) or i == n)
        if keep or i == n:
            history.append(dict(state.diagnostics, t=state.time))
        if keep:
            slices_t.append(state.time)
            slices_v.append(state.field.values.copy())
    series = FieldSeries(problem.grid, np.array(slices_t), np.array(slices_v)) if record_every else None
    return state, series, history


# Picard iteration


def linear_slices(metric: Metric, u0: GridField, times: np.ndarray, dt: float) -> np.ndarray:
    return propagate_series(metric, u0, times, dt).values


def _sup_l2(grid: Grid, values: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.sum(np.abs(values) ** 2, axis=tuple(range(1, grid.dim + 1))))
                         * grid.cell_volume))


def z_proxy(grid: Grid, values: np.ndarray, times: np.ndarray) -> float:
    """Discrete L^10_t L^10_x Riemann sum over stored slices."""
    if len(times) < 2:
        return 0.0
    dt = float(times[1] - times[0])
    return float((np.sum(np.abs(values) ** 10) * grid.cell_volume * dt) ** 0.1)


def duhamel_map(
    problem: NLSProblem, linear: np.ndarray, iterate: np.ndarray, times: np.ndarray, dt: float
) -> np.ndarray:
    """I(u)(t_i) = e^{it_i Delta_g} u0 - i mu int_0^{t_i} e^{i(t_i - s) Delta_g} F(u(s)) ds (trapezoid)."""
    metric, p = problem.metric, problem
    grid = problem.grid
    delta = float(times[1] - times[0]) if len(times) > 1 else 0.0
    forcing = np.abs(iterate) ** (p.exponent - 1) * iterate
    integral = np.zeros_like(iterate)
    for i in range(1, len(times)):
        carried = GridField(grid, integral[i - 1] + 0.5 * delta * forcing[i - 1])
        moved = metric_propagate(metric, carried, delta, min(dt, delta)).values
        integral[i] = moved + 0.5 * delta * forcing[i]
    return linear - 1j * p.mu * integral


def picard_iterate(
    problem: NLSProblem,
    times: Sequence[float],
    iterations: int,
    dt: float,
    z_threshold: Optional[float] = None,
) -> PicardReport:
    """Iterate u_{k+1} = I(u_k) from the linear flow on uniformly spaced slices.

    Ratios are ||u_{k+2} - u_{k+1}|| / ||u_{k+1} - u_k|| in L^inf_t L^2_x.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 2 or not np.allclose(np.diff(times), times[1] - times[0]) or times[0] != 0.0:
        raise ConfigurationError("Picard slices must be uniformly spaced and start at t = 0")
    grid = problem.grid
    linear = linear_slices(problem.metric, problem.initial, times, dt)
    if z_threshold is not None:
        size = z_proxy(grid, linear, times)
        if size > z_threshold:
            logger.warning("linear Z-proxy %.3e exceeds the small-data gate %.3e", size, z_threshold)
    current = linear
    differences: List[float] = []
    ratios: List[float] = []
    streak = 0
    for k in range(iterations):
        nxt = duhamel_map(problem, linear, current, times, dt)
        diff = _sup_l2(grid, nxt - current)
        current = nxt
        if differences and differences[-1] > 0.0:
            ratio = diff / differences[-1]
            ratios.append(ratio)
            streak = streak + 1 if ratio > 1.0 else 0
            if streak >= 3:
                raise NotContracting(f"contraction ratios above 1 for 3 iterations (last {ratio:.3g})")
        differences.append(diff)
        logger.debug("picard iteration %d: difference %.3e", k + 1, diff)
        if diff == 0.0:
            break
    return PicardReport(
        ratios=ratios,
        differences=differences,
        iterations=len(differences),
        fixed_point=bool(differences and differences[-1] == 0.0),
        times=times,
        iterate=current,
    )


# Scattering


def scattering_comparison(
    metric: Metric,
    u0: GridField,
    times: Sequence[float],
    dt: float,
    scheme: str = "strang",
) -> ScatteringTable:
    """Cauchy differences ||W(t_{i+1}) u0 - W(t_i) u0||_{H^1-dot}, W(t) = e^{-it Delta} e^{it Delta_g}."""
    flat = Metric(dim=metric.dim)
    series = propagate_series(metric, u0, times, dt, scheme=scheme)
    boundary = max(series.slice(i).boundary_mass_fraction(settings.BOUNDARY_ZONE)
                   for i in range(len(series)))
    if boundary > settings.BOUNDARY_MASS_TOL:
        raise BoundaryContaminated(f"boundary mass fraction {boundary:.3e} exceeds tolerance")
    pulled = [flat_propagate(series.slice(i), -t) for i, t in enumerate(series.times)]
    differences = [
        sobolev_norm(flat, pulled[i + 1] - pulled[i], 1.0, flavor="flat") for i in range(len(pulled) - 1)
    ]
    return ScatteringTable(times=[float(t) for t in series.times], differences=differences,
                           boundary_mass=boundary)


def check_boundary(u: GridField, label: str = "") -> float:
    """Boundary-zone mass fraction; logs a warning above tolerance."""
    fraction = u.boundary_mass_fraction(settings.BOUNDARY_ZONE)
    if fraction > settings.BOUNDARY_MASS_TOL:
        logger.warning("boundary mass %.3e above tolerance %s", fraction, label)
    return fraction


# Checkpoints


def write_checkpoint(state: EvolutionState, path: Union[str, Path]) -> Path:
    """Field in the SCLF1 format plus a key-value sidecar with time and diagnostics."""
    from ..core.storage import write_field, write_sidecar

    path = Path(path)
    write_field(state.field, path)
    write_sidecar(path.with_suffix(path.suffix + ".meta"), {"time": state.time, **state.diagnostics})
    return path


def read_checkpoint(path: Union[str, Path]) -> EvolutionState:
    from ..core.storage import read_field, read_sidecar

    path = Path(path)
    field = read_field(path)
    meta = read_sidecar(path.with_suffix(path.suffix + ".meta"))
    time = float(meta.pop("time", 0.0))
    field.time = time
    return EvolutionState(field=field, time=time, diagnostics={k: float(v) for k, v in meta.items()})
