"""Experiment drivers: each binds the numerical services into one reproducible sweep."""

import logging
import math
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np

from ..core.config import settings
from ..core.exceptions import ConfigurationError
from ..core.storage import PlotSpec, write_fbi_table, write_gnuplot, write_table
from ..models.cutoffs import FrequencyCutoffs
from ..models.grid import Grid, GridField
from ..models.metric import Metric, MetricFamily
from ..models.phase import FBITable, PhasePoint
from ..models.state import NLSProblem
from ..schemas.reports import ExperimentRecord, ExperimentSummary, SlopeFit
from ..schemas.run_config import RunConfig
from . import analysis, geodesic_flow, propagate, spectral
from .geometry import build_metric, c3_estimate, load_metric_table
from .phase_space import annulus_profile, fbi_transform, phase_grid, wrapped_offset

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

TUBE_SLICES = 401
FBI_TABLE_LIMIT = 2 ** 22


@dataclass
class Table:
    """One sweep table; the leading ``parameters`` columns identify the ladder point."""

    name: str
    columns: Tuple[str, ...]
    parameters: int = 1
    rows: List[tuple] = field(default_factory=list)

    def add(self, *row) -> None:
        self.rows.append(tuple(row))

    def column(self, name: str) -> List:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


@dataclass
class Measurement:
    """Everything a driver measured, before it is written out."""

    tables: List[Table] = field(default_factory=list)
    values: Dict[str, float] = field(default_factory=dict)
    slopes: Dict[str, SlopeFit] = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    plots: List[Tuple[str, str, str, bool]] = field(default_factory=list)
    fbi_tables: Dict[str, FBITable] = field(default_factory=dict)

    def slope(self, name: str, parameters: Sequence[float], values: Sequence[float]) -> Optional[SlopeFit]:
        fit = analysis.log_slope(parameters, values)
        if fit is not None:
            self.slopes[name] = fit
        return fit


def metric_from_config(config: RunConfig) -> Metric:
    table = None
    if config.metric == MetricFamily.CUSTOM.value:
        if not config.metric_table:
            raise ConfigurationError("custom-table metric requires metric_table")
        table = load_metric_table(config.metric_table)
    return build_metric(config.metric, config.epsilon, config.r_supp, config.dim, table=table)


def _axis_point(dim: int, first: float) -> List[float]:
    return [float(first)] + [0.0] * (dim - 1)


def _decreasing(values: Sequence[float]) -> bool:
    return all(b < a or (a <= 1e-12 and b <= 1e-12) for a, b in zip(values, values[1:]))


class BaseExperiment(ABC):
    """Abstract base class for experiment drivers."""

    drives_pde = True

    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config.config_hash()
        self.metric = metric_from_config(config)
        self.grid = Grid(config.dim, config.length, config.points)
        self.boundary_mass = 0.0

    @abstractmethod
    def get_experiment_name(self) -> str:
        """Get the experiment name (CLI subcommand)."""
        pass

    @abstractmethod
    def measure(self) -> Measurement:
        """Run the sweep and collect tables, slopes and flags."""
        pass

    def map_ladder(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Evaluate ladder points on the worker pool; results come back in ladder order."""
        if self.config.threads == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            return list(pool.map(fn, items))

    def guard(self, u: GridField, label: str = "") -> float:
        fraction = propagate.check_boundary(u, label)
        self.boundary_mass = max(self.boundary_mass, fraction)
        return fraction

    def tolerance(self, m: Measurement, name: str, default: float) -> float:
        value = self.config.tolerance(name, default)
        m.tolerances[name] = value
        return value

    def records(self, m: Measurement, wall_clock: float = 0.0) -> List[ExperimentRecord]:
        out = []
        for table in m.tables:
            p = table.parameters
            for row in table.rows:
                out.append(
                    ExperimentRecord(
                        experiment=self.get_experiment_name(),
                        config_hash=self.config_hash,
                        seed=self.config.seed,
                        parameters={"table": table.name, **dict(zip(table.columns[:p], row[:p]))},
                        values={c: float(v) for c, v in zip(table.columns[p:], row[p:])},
                        wall_clock=wall_clock,
                    )
                )
        return out

    def execute(
        self, out_dir: Optional[Union[str, Path]] = None
    ) -> Tuple[ExperimentSummary, List[ExperimentRecord]]:
        """Measure, then write one CSV per table, the summary JSON and a gnuplot script."""
        name = self.get_experiment_name()
        logger.info("running %s (config %s, seed %d)", name, self.config_hash, self.config.seed)
        started = time.perf_counter()
        m = self.measure()
        elapsed = time.perf_counter() - started
        if self.drives_pde:
            tol = self.tolerance(m, "boundary_mass", settings.BOUNDARY_MASS_TOL)
            m.values["boundary_mass"] = self.boundary_mass
            m.flags["boundary_clean"] = self.boundary_mass <= tol
        records = self.records(m, elapsed)
        files: List[str] = []
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            headers: Dict[str, Sequence[str]] = {}
            for table in m.tables:
                filename = f"{name}_{table.name}.csv"
                columns = ("config_hash", "seed") + table.columns
                rows = [(self.config_hash, self.config.seed) + row for row in table.rows]
                write_table(out / filename, columns, rows)
                headers[filename] = columns
                files.append(filename)
            plots = [
                PlotSpec(f"{name}_{table}.csv", x, y, f"{name}: {y} vs {x}", logscale)
                for table, x, y, logscale in m.plots
            ]
            if plots:
                write_gnuplot(out / f"{name}.gp", plots, headers)
                files.append(f"{name}.gp")
            for key, table in m.fbi_tables.items():
                filename = f"{name}_{key}.fbi"
                write_fbi_table(table, out / filename)
                files.append(filename)
            files.append(f"{name}_summary.json")
        summary = ExperimentSummary(
            experiment=name,
            config_hash=self.config_hash,
            seed=self.config.seed,
            records=len(records),
            slopes=m.slopes,
            values={k: float(v) for k, v in m.values.items()},
            flags={k: bool(v) for k, v in m.flags.items()},
            tolerances=m.tolerances,
            files=files,
            wall_clock=elapsed,
        )
        if out_dir is not None:
            (Path(out_dir) / f"{name}_summary.json").write_text(summary.model_dump_json(indent=2))
        failed = [flag for flag, ok in m.flags.items() if not ok]
        if failed:
            logger.warning("%s: failed flags %s", name, ", ".join(failed))
        logger.info("%s finished in %.2fs with %d records", name, elapsed, len(records))
        return summary, records


class GeodesicExperiment(BaseExperiment):
    """Flow invariants, nontrapping, refocusing and the preimage-measure r-sweep."""

    drives_pde = False

    def get_experiment_name(self) -> str:
        return "geodesic"

    def measure(self) -> Measurement:
        cfg, metric, d = self.config, self.metric, self.config.dim
        m = Measurement()
        p0 = PhasePoint(x=[-3.0] + [0.3] * (d - 1), xi=_axis_point(d, 1.0))
        _, trajectory = geodesic_flow.flow(metric, p0, cfg.t_max, dt=cfg.dt, record=True)
        coords = tuple(f"x{i + 1}" for i in range(d)) + tuple(f"xi{i + 1}" for i in range(d))
        m.tables.append(Table("trajectory", ("t",) + coords + ("a",), rows=[tuple(r) for r in trajectory.rows()]))
        m.values["symbol_drift"] = trajectory.drift
        m.flags["symbol_drift"] = trajectory.drift <= self.tolerance(m, "symbol_drift", settings.FLOW_TOL)

        homogeneity = Table("homogeneity", ("t", "error"))
        for t in (0.5, 2.0, 5.0):
            direct = geodesic_flow.flow(metric, p0, t, dt=cfg.dt)
            scaled = geodesic_flow.flow(metric, PhasePoint(p0.x, t * p0.xi), 1.0, dt=cfg.dt)
            homogeneity.add(t, float(np.linalg.norm(direct.x - scaled.x)))
        m.tables.append(homogeneity)
        m.flags["homogeneity"] = max(homogeneity.column("error")) <= self.tolerance(m, "homogeneity", 1e-6)

        probe = geodesic_flow.nontrapping_probe(metric, min(cfg.samples, 10_000), 100.0, seed=cfg.seed)
        m.values["escape_time"] = probe.escape_time
        m.values["non_escapers"] = float(probe.non_escapers)
        m.flags["nontrapping"] = probe.all_escaped

        x = cfg.source or [0.0] * d
        z = cfg.target or _axis_point(d, 1.0)
        if d <= 2:
            scan = geodesic_flow.refocusing_scan(metric, x, geodesic_flow.annulus_grid(d, 0.5, 1.0, 32, 256))
            m.values["refocusing_peak_ratio"] = scan.peak_ratio
            m.values["refocusing_uniform_ratio"] = scan.uniform_ratio

        radii = cfg.r_list or [0.2, 0.1, 0.05, 0.025]
        center = 0.5 * (np.asarray(z, dtype=float) - np.asarray(x, dtype=float))
        sweep = geodesic_flow.preimage_sweep(
            metric, x, z, radii, cfg.samples, cfg.xi_max, seed=cfg.seed, xi_center=center,
            threads=cfg.threads,
        )
        table = Table("preimage", ("r", "measure", "stderr", "hits", "samples", "reliable"))
        for est in sweep.estimates:
            table.add(est.radius, est.measure, est.stderr, est.hits, est.samples, est.reliable)
        m.tables.append(table)
        m.plots.append(("preimage", "r", "measure", True))
        m.flags["reliable"] = all(est.reliable for est in sweep.estimates)
        if sweep.fit is not None:
            m.slopes["preimage"] = sweep.fit
            tol = self.tolerance(m, "slope", 0.15)
            if metric.is_flat:
                m.flags["preimage_slope"] = sweep.fit.within(float(d), tol)
            else:
                # thin-preimage bound: measure = O(r)
                m.flags["preimage_slope"] = sweep.fit.slope >= 1.0 - tol
        return m


class ExtinctionExperiment(BaseExperiment):
    """sup over t >= T h^2 of ||e^{it Delta_g} phi_h||_{L^q} along an h ladder."""

    def get_experiment_name(self) -> str:
        return "extinction"

    def _point(self, h: float) -> Tuple[float, float, float]:
        cfg = self.config
        phi = annulus_profile(self.grid, h, cfg.band_epsilon, center=cfg.source or None)
        start = cfg.extinction_window * h * h
        times = sorted(set(np.linspace(start, cfg.t_max, cfg.slices).tolist()) | {2.0 * start})
        series = propagate.propagate_series(self.metric, phi, times, cfg.dt, scheme=cfg.scheme)
        norms = [spectral.lp_norm(self.grid, series.values[i], cfg.lebesgue_q) for i in range(len(series))]
        late = [n for t, n in zip(times, norms) if t >= 2.0 * start - 1e-15]
        boundary = self.guard(series.slice(len(series) - 1), f"(extinction h={h})")
        logger.info("extinction h=%g: sup L^%g = %.6g", h, cfg.lebesgue_q, max(norms))
        return max(norms), max(late), boundary

    def measure(self) -> Measurement:
        cfg, d = self.config, self.config.dim
        m = Measurement()
        h_values = sorted(cfg.h_list or [0.1, 0.07, 0.05], reverse=True)
        results = self.map_ladder(self._point, h_values)
        table = Table("sweep", ("h", "sup_T", "sup_2T", "boundary_mass"))
        for h, (sup_t, sup_2t, boundary) in zip(h_values, results):
            table.add(h, sup_t, sup_2t, boundary)
        m.tables.append(table)
        m.plots.append(("sweep", "h", "sup_T", True))
        sups = table.column("sup_T")
        m.flags["decreasing_in_h"] = _decreasing(sups)
        m.flags["window_monotone"] = all(b <= a for a, b in zip(sups, table.column("sup_2T")))
        fit = m.slope("h_exponent", h_values, sups)
        if fit is not None:
            if self.metric.is_flat:
                m.flags["h_exponent"] = fit.slope > 0.0
            else:
                m.flags["h_exponent"] = fit.slope >= 1.0 / d - self.tolerance(m, "h_exponent", 0.2)
        return m


class DispersiveExperiment(BaseExperiment):
    """Semiclassical sup-norm decay: the short-time t-law and the fixed-time h-law."""

    def get_experiment_name(self) -> str:
        return "dispersive"

    def initial_data(self, h: float) -> GridField:
        """chi(hD) applied to a unit-L^1 Gaussian of width h (a delta proxy)."""
        cfg = self.config
        center = cfg.source or [0.0] * cfg.dim
        r2 = sum(o ** 2 for o in wrapped_offset(self.grid, np.asarray(center, dtype=float)))
        values = np.exp(-r2 / (2.0 * h * h)) / (2.0 * math.pi * h * h) ** (cfg.dim / 2.0)
        bump = GridField(self.grid, values.astype(complex))
        return spectral.frequency_cutoff(FrequencyCutoffs(cfg.band_epsilon), 1, h, bump)

    def _sup_series(self, h: float, times: Sequence[float]) -> List[float]:
        series = propagate.propagate_series(
            self.metric, self.initial_data(h), times, self.config.dt,
            operator="semiclassical", scheme=self.config.scheme, h=h,
        )
        self.guard(series.slice(len(series) - 1), f"(dispersive h={h})")
        return [float(np.max(np.abs(series.values[i]))) for i in range(len(series))]

    def _phase_space(self, m: Measurement, h: float) -> None:
        """FBI table of the localized datum, saved with the run, and its isometry defect."""
        if self.grid.spacing > math.sqrt(h):
            logger.warning("dispersive: grid step %.3g does not resolve h^(1/2)", self.grid.spacing)
            return
        f = self.initial_data(h)
        pgrid = phase_grid(self.grid, h, f=f)
        size = ((self.grid.points // pgrid.stride) * len(pgrid.xi_axis)) ** self.grid.dim
        if size > FBI_TABLE_LIMIT:
            logger.warning("dispersive: FBI table of %d entries skipped (limit %d)", size, FBI_TABLE_LIMIT)
            return
        table = fbi_transform(f, h, pgrid, threads=self.config.threads)
        m.fbi_tables["initial_fbi"] = table
        defect = abs(table.norm_squared() / f.l2_norm() ** 2 - 1.0)
        m.values["fbi_isometry_defect"] = defect
        m.flags["fbi_isometry"] = defect <= self.tolerance(m, "fbi_isometry", 1e-3)

    def measure(self) -> Measurement:
        cfg, d = self.config, self.config.dim
        if d not in (1, 2):
            raise ConfigurationError("the semiclassical dispersive sweep runs in d = 1 or 2")
        m = Measurement()
        h_values = cfg.h_list or [0.05]
        c = cfg.short_window
        times = cfg.times or [c * 2.0 ** -k for k in range(cfg.slices - 1, -1, -1)]

        h0 = h_values[0]
        sups = self._sup_series(h0, times)
        short = Table("short_time", ("h", "t", "sup", "scaled"), parameters=2)
        for t, s in zip(times, sups):
            short.add(h0, t, s, s * (h0 * t) ** (d / 2.0))
        m.tables.append(short)
        m.plots.append(("short_time", "t", "sup", True))
        fit = m.slope("t_slope", times, sups)
        if fit is not None:
            m.flags["t_slope"] = fit.within(-d / 2.0, self.tolerance(m, "t_slope", 0.1))
        scaled = short.column("scaled")
        m.values["scaled_spread"] = max(scaled) / min(scaled)
        if self.metric.is_flat:
            m.flags["scaled_constant"] = m.values["scaled_spread"] <= self.tolerance(m, "scaled_spread", 1.5)
        self._phase_space(m, h0)

        if len(h_values) >= 2:
            fixed = self.map_ladder(lambda h: self._sup_series(h, [cfg.fixed_time])[0], h_values)
            table = Table("fixed_time", ("h", "t", "sup"), parameters=2)
            for h, s in zip(h_values, fixed):
                table.add(h, cfg.fixed_time, s)
            m.tables.append(table)
            m.plots.append(("fixed_time", "h", "sup", True))
            fit = m.slope("h_slope", h_values, fixed)
            if fit is not None:
                m.flags["h_slope"] = fit.slope >= -(d - 0.5) - self.tolerance(m, "h_slope", 0.2)
        return m


class ConvergenceExperiment(BaseExperiment):
    """sup_t ||e^{it Delta_g} phi_n - e^{it Delta_ref} phi_n|| along a (lambda_n, x_n) ladder."""

    def get_experiment_name(self) -> str:
        return "converge"

    def ladder(self) -> List[Tuple[float, List[float]]]:
        cfg, d = self.config, self.config.dim
        if cfg.scenario == "a":
            return [(lam, [0.0] * d) for lam in (cfg.scales or [2.0, 4.0, 8.0])]
        if cfg.scenario == "b":
            lam = cfg.scales[0] if cfg.scales else 1.0
            return [(lam, _axis_point(d, c)) for c in (cfg.centers or [4.0, 6.0, 8.0])]
        x_inf = np.asarray(cfg.target or _axis_point(d, 0.5), dtype=float)
        scales = cfg.scales or [0.5, 0.25, 0.125]
        offsets = cfg.centers or scales
        if len(offsets) != len(scales):
            raise ConfigurationError("scenario c needs one center offset per scale")
        return [(lam, (x_inf + _axis_point(d, off)).tolist()) for lam, off in zip(scales, offsets)]

    def _point(self, item: Tuple[float, List[float]]) -> Tuple[float, float]:
        cfg = self.config
        scale, center = item
        phi = analysis.synthetic_bubble(self.grid, scale, center)
        times = cfg.times or np.linspace(0.0, cfg.t_max, cfg.slices)[1:].tolist()
        reference = "frozen" if cfg.scenario == "c" else "flat"
        x_inf = cfg.target or _axis_point(cfg.dim, 0.5)
        scheme = "crank_nicolson" if cfg.scheme == "auto" else cfg.scheme
        l6 = propagate.propagator_difference(self.metric, phi, times, cfg.dt, reference, x_inf, "L6", scheme)
        h1 = propagate.propagator_difference(self.metric, phi, times, cfg.dt, reference, x_inf, "H1", scheme)
        self.guard(propagate.flat_propagate(phi, max(times)), f"(converge lambda={scale})")
        return l6, h1

    def measure(self) -> Measurement:
        m = Measurement()
        ladder = self.ladder()
        results = self.map_ladder(self._point, ladder)
        table = Table("sweep", ("n", "scale", "center", "diff_L6", "diff_H1"), parameters=3)
        for n, ((scale, center), (l6, h1)) in enumerate(zip(ladder, results), start=1):
            table.add(n, scale, center[0], l6, h1)
        m.tables.append(table)
        m.plots.append(("sweep", "n", "diff_L6", False))
        m.flags["monotone_L6"] = _decreasing(table.column("diff_L6"))
        if self.config.scenario in ("a", "b"):
            m.flags["monotone_H1"] = _decreasing(table.column("diff_H1"))
        if not self.metric.is_flat:
            m.values["c3_norm"] = c3_estimate(self.metric)["c3"]
            logger.info("C^3 size of g - delta: %.3e (reported only)", m.values["c3_norm"])
        return m


class MorawetzExperiment(BaseExperiment):
    """Morawetz identity residual under refinement and the Bourgain-Morawetz |I| sweep."""

    def get_experiment_name(self) -> str:
        return "morawetz"

    def initial_data(self) -> GridField:
        cfg = self.config
        return analysis.synthetic_bubble(self.grid, cfg.width, cfg.source or [0.0] * cfg.dim, cfg.amplitude)

    def _identity(self, level: int) -> Tuple[float, float, float, float]:
        cfg = self.config
        spacing = cfg.t_max / (cfg.slices - 1) / 2 ** level
        dt = cfg.dt / 2 ** level
        record_every = int(round(spacing / dt))
        if record_every < 1 or abs(record_every * dt - spacing) > 1e-9 * spacing:
            raise ConfigurationError("slice spacing t_max/(slices-1) must be a multiple of dt")
        problem = NLSProblem(self.metric, self.initial_data(), cfg.exponent, cfg.mu)
        state, series, _ = propagate.nls_evolve(problem, cfg.t_max, dt, record_every, cfg.scheme)
        self.guard(state.field, "(morawetz)")
        report = analysis.morawetz_report(series, self.metric, cfg.morawetz_radius, cfg.mu, cfg.exponent)
        return spacing, dt, report.max_residual, report.derivative_bound

    def _bourgain(self, m: Measurement) -> None:
        cfg = self.config
        lengths = sorted(cfg.lengths)
        spacing = lengths[0] / (cfg.slices - 1)
        problem = NLSProblem(self.metric, self.initial_data(), cfg.exponent, 1)
        e0 = propagate.energy(self.metric, problem.initial, cfg.exponent, 1)
        stepper = propagate.NLSStepper(problem, cfg.dt, cfg.scheme)
        state = propagate.initial_state(problem)
        per_step = int(round(spacing / cfg.dt))
        if per_step < 1:
            raise ConfigurationError("Bourgain-Morawetz slice spacing is below dt")
        times = [0.0]
        densities = {L: [analysis.bourgain_density(self.metric, state.field, math.sqrt(L))] for L in lengths}
        while times[-1] < lengths[-1] - 1e-12:
            for _ in range(per_step):
                state = propagate.nls_step(problem, state, cfg.dt, stepper, diagnostics=False)
            times.append(state.time)
            for L in lengths:
                densities[L].append(analysis.bourgain_density(self.metric, state.field, math.sqrt(L)))
        self.guard(state.field, "(bourgain-morawetz)")
        table = Table("bourgain", ("length", "raw_integral", "energy", "ratio"))
        raws = []
        for L in lengths:
            keep = [i for i, t in enumerate(times) if t <= L + 1e-9]
            result = analysis.bourgain_result([times[i] for i in keep], [densities[L][i] for i in keep], e0)
            table.add(L, result.raw_integral, result.energy, result.ratio)
            raws.append(result.raw_integral)
        m.tables.append(table)
        m.plots.append(("bourgain", "length", "raw_integral", True))
        if all(r > 0 for r in raws):
            fit = m.slope("bourgain_exponent", lengths, raws)
            if fit is not None:
                m.flags["bourgain_exponent"] = fit.slope <= 0.5 + self.tolerance(m, "bourgain_exponent", 0.1)

    def measure(self) -> Measurement:
        cfg = self.config
        m = Measurement()
        levels = list(range(cfg.refinements + 1))
        results = self.map_ladder(self._identity, levels)
        table = Table("identity", ("level", "slice_spacing", "dt", "max_residual", "derivative_bound"))
        for level, row in zip(levels, results):
            table.add(level, *row)
        m.tables.append(table)
        m.plots.append(("identity", "slice_spacing", "max_residual", True))
        residuals = table.column("max_residual")
        if len(residuals) >= 2 and residuals[-1] > 0:
            ratio = residuals[-2] / residuals[-1]
            m.values["richardson_ratio"] = ratio
            m.flags["richardson"] = abs(ratio - 4.0) <= self.tolerance(m, "richardson", 0.5)
        if cfg.lengths:
            self._bourgain(m)
        return m


class LocalSmoothingExperiment(BaseExperiment):
    """Scaled local-smoothing functional along B and N ladders."""

    def get_experiment_name(self) -> str:
        return "smoothing"

    def _point(self, item: Tuple[float, float]) -> float:
        cfg = self.config
        level, band = item
        phi = analysis.smoothing_probe_packet(self.grid, level, band, cfg.tube_radius)
        self.guard(propagate.flat_propagate(phi, cfg.window / level ** 2), f"(smoothing N={level} B={band})")
        return analysis.local_smoothing_functional(
            self.metric, phi, level, band, cfg.window, cfg.tube_radius, slices=TUBE_SLICES, dt=cfg.dt,
        )

    def measure(self) -> Measurement:
        cfg = self.config
        m = Measurement()
        levels = cfg.n_list or [4.0, 8.0, 16.0]
        bands = cfg.b_list or [1.0, 2.0, 4.0, 8.0]
        tol = self.tolerance(m, "slope", 0.15)
        for name, items, varying in (
            ("b_sweep", [(levels[0], b) for b in bands], 1),
            ("n_sweep", [(n, bands[0]) for n in levels], 0),
        ):
            values = self.map_ladder(self._point, items)
            table = Table(name, ("N", "B", "functional"), parameters=2)
            for (n, b), v in zip(items, values):
                table.add(n, b, v)
            m.tables.append(table)
            m.plots.append((name, "B" if varying else "N", "functional", True))
            if all(v > 0 for v in values):
                target = -0.5 if varying else -1.0
                fit = m.slope(f"{name[0]}_exponent", [item[varying] for item in items], values)
                if fit is not None:
                    m.flags[f"{name[0]}_exponent"] = fit.within(target, tol)
        return m


class ProfilesExperiment(BaseExperiment):
    """Greedy profile extraction on a synthetic superposition of bubbles."""

    def get_experiment_name(self) -> str:
        return "profiles"

    def bubbles(self) -> List[Tuple[float, List[float]]]:
        cfg = self.config
        scales = cfg.scales or [1.0 / 16.0, 2.0]
        centers = cfg.centers or [-20.0, 20.0]
        if len(scales) != len(centers):
            raise ConfigurationError("profiles need one center per scale")
        return [(lam, _axis_point(cfg.dim, c)) for lam, c in zip(scales, centers)]

    def levels(self, scales: Sequence[float]) -> List[float]:
        if self.config.n_list:
            return list(self.config.n_list)
        low = 2.0 ** math.floor(math.log2(1.0 / (4.0 * max(scales))))
        high = 2.0 ** math.ceil(math.log2(4.0 / min(scales)))
        return spectral.dyadic_levels(low, high)

    def measure(self) -> Measurement:
        cfg = self.config
        m = Measurement()
        bubbles = self.bubbles()
        f = GridField.zeros(self.grid)
        for lam, center in bubbles:
            f = f + analysis.synthetic_bubble(self.grid, lam, center, cfg.amplitude)
        self.guard(f, "(profiles)")
        times = analysis.witness_time_ladder(cfg.ladder_step, cfg.ladder_count) if cfg.ladder_step else [0.0]
        result = analysis.greedy_profile_extract(
            self.metric, f, cfg.max_bubbles, self.levels([lam for lam, _ in bubbles]), times,
            dt=cfg.dt, threads=cfg.threads,
        )
        table = Table("frames", ("index", "scale", "center", "time", "norm"))
        for i, frame in enumerate(result.frames, start=1):
            table.add(i, frame.scale, frame.center[0], frame.time, frame.norm)
        m.tables.append(table)
        m.plots.append(("frames", "index", "norm", True))
        m.values.update(
            input_norm=result.input_norm,
            remainder_norm=result.remainder_norm,
            decoupling_defect=result.decoupling_defect,
            stalled=float(result.stalled),
        )

        def recovered(lam: float, center: List[float]) -> bool:
            return any(
                abs(math.log2(fr.scale / lam)) <= 1.0 + 1e-9
                and float(np.linalg.norm(np.subtract(fr.center, center))) <= lam
                for fr in result.frames
            )

        m.flags["frames_recovered"] = len(result.frames) == len(bubbles) and all(
            recovered(lam, c) for lam, c in bubbles
        )
        m.flags["decoupling"] = result.decoupling_defect <= self.tolerance(m, "decoupling", 0.05)
        return m


class NLSExperiment(BaseExperiment):
    """Defocusing NLS run: conservation, spacetime norm proxies and optional Picard ratios."""

    def get_experiment_name(self) -> str:
        return "nls"

    def measure(self) -> Measurement:
        cfg = self.config
        m = Measurement()
        u0 = analysis.synthetic_bubble(self.grid, cfg.width, cfg.source or [0.0] * cfg.dim, cfg.amplitude)
        problem = NLSProblem(self.metric, u0, cfg.exponent, cfg.mu)
        steps = int(round(cfg.t_max / cfg.dt))
        record_every = max(1, steps // max(cfg.slices - 1, 1))
        state, series, history = propagate.nls_evolve(problem, cfg.t_max, cfg.dt, record_every, cfg.scheme)
        self.guard(state.field, "(nls)")
        table = Table("conservation", ("t", "mass", "energy", "max"))
        for row in history:
            table.add(row["t"], row["mass"], row["energy"], row["max"])
        m.tables.append(table)
        m.plots.append(("conservation", "t", "energy", False))
        m0, e0 = history[0]["mass"], history[0]["energy"]
        m.values["mass_drift"] = max(abs(r["mass"] - m0) for r in history) / m0
        m.values["energy_drift"] = max(abs(r["energy"] - e0) for r in history) / abs(e0)
        m.flags["mass"] = m.values["mass_drift"] <= self.tolerance(m, "mass", 1e-10)
        m.flags["energy"] = m.values["energy_drift"] <= self.tolerance(m, "energy", 1e-6)

        suite = analysis.norm_suite(series, self.metric, cfg.exponent)
        m.values.update(z_proxy=suite.z_proxy, n_proxy=suite.n_proxy, y_proxy=suite.y_proxy)
        m.flags["holder"] = suite.holder_consistent()

        if cfg.picard_iterations:
            times = np.linspace(0.0, cfg.t_max, cfg.slices)
            report = propagate.picard_iterate(problem, times, cfg.picard_iterations, cfg.dt)
            picard = Table("picard", ("iteration", "difference", "ratio"))
            for k, diff in enumerate(report.differences, start=1):
                picard.add(k, diff, report.ratios[k - 2] if k >= 2 else float("nan"))
            m.tables.append(picard)
            m.flags["contracting"] = all(r < 1.0 for r in report.ratios)
        return m


class ExperimentFactory:
    """Factory for creating experiment drivers."""

    _experiments: Dict[str, Type[BaseExperiment]] = {
        "geodesic": GeodesicExperiment,
        "extinction": ExtinctionExperiment,
        "dispersive": DispersiveExperiment,
        "converge": ConvergenceExperiment,
        "morawetz": MorawetzExperiment,
        "smoothing": LocalSmoothingExperiment,
        "profiles": ProfilesExperiment,
        "nls": NLSExperiment,
    }

    @classmethod
    def create_experiment(cls, name: str, config: RunConfig) -> BaseExperiment:
        """Create the driver for ``name``."""
        if name not in cls._experiments:
            raise ConfigurationError(f"Unsupported experiment: {name}")
        return cls._experiments[name](config)

    @classmethod
    def get_supported_experiments(cls) -> List[str]:
        """Get list of supported experiments."""
        return list(cls._experiments.keys())

    @classmethod
    def is_experiment_supported(cls, name: str) -> bool:
        """Check if experiment is supported."""
        return name in cls._experiments


def run_experiment(
    config: RunConfig, out_dir: Optional[Union[str, Path]] = None
) -> Tuple[ExperimentSummary, List[ExperimentRecord]]:
    return ExperimentFactory.create_experiment(config.experiment, config).execute(out_dir)


def _records(name: str, config: RunConfig, out_dir: Optional[Union[str, Path]]) -> List[ExperimentRecord]:
    return ExperimentFactory.create_experiment(name, config).execute(out_dir)[1]


def run_geodesic(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> List[ExperimentRecord]:
    return _records("geodesic", config, out_dir)


def run_extinction(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> List[ExperimentRecord]:
    return _records("extinction", config, out_dir)


def run_appendix_dispersive(
    config: RunConfig, out_dir: Optional[Union[str, Path]] = None
) -> List[ExperimentRecord]:
    return _records("dispersive", config, out_dir)


def run_propagator_convergence(
    config: RunConfig, out_dir: Optional[Union[str, Path]] = None
) -> List[ExperimentRecord]:
    return _records("converge", config, out_dir)


def run_morawetz(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> List[ExperimentRecord]:
    return _records("morawetz", config, out_dir)


def run_local_smoothing(
    config: RunConfig, out_dir: Optional[Union[str, Path]] = None
) -> List[ExperimentRecord]:
    return _records("smoothing", config, out_dir)


def run_profiles(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> List[ExperimentRecord]:
    return _records("profiles", config, out_dir)


def run_nls(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> List[ExperimentRecord]:
    return _records("nls", config, out_dir)
