"""
Unit tests for the propagators, the NLS stepper and Picard iteration.
"""

import numpy as np
import pytest

from sclens.core.exceptions import BoundaryContaminated, ConfigurationError, StepTooLarge
from sclens.models import EvolutionState, Grid, GridField, NLSProblem
from sclens.services.propagate import (
    GeneratorFactory,
    check_boundary,
    energy,
    flat_propagate,
    frozen_propagate,
    mass,
    metric_propagate,
    nls_evolve,
    picard_iterate,
    propagate_series,
    propagator_difference,
    read_checkpoint,
    scattering_comparison,
    write_checkpoint,
)


@pytest.fixture
def curved_grid():
    """1D box [-8, 8) with 128 points."""
    return Grid(dim=1, length=16.0, points=128)


@pytest.fixture
def curved_data(curved_grid):
    x = curved_grid.axis
    return GridField(curved_grid, np.exp(-((x + 0.5) ** 2)) * np.exp(0.5j * x))


def free_gaussian(x: np.ndarray, t: float) -> np.ndarray:
    """e^{it Delta} e^{-x^2} in one dimension."""
    s = 1.0 + 4.0j * t
    return np.exp(-(x ** 2) / s) / np.sqrt(s)


class TestFreePropagation:
    """Test the exact flat multiplier and its Crank-Nicolson model."""

    @pytest.mark.unit
    def test_flat_gaussian(self, line_grid, gaussian_line):
        u = flat_propagate(gaussian_line, 0.5)
        np.testing.assert_allclose(u.values, free_gaussian(line_grid.axis, 0.5), atol=1e-12)
        assert u.time == 0.5

    @pytest.mark.unit
    def test_flat_metric_uses_exact_multiplier(self, flat_line, gaussian_line):
        u = metric_propagate(flat_line, gaussian_line, 0.5, dt=0.05)
        np.testing.assert_allclose(u.values, flat_propagate(gaussian_line, 0.5).values, atol=1e-12)

    @pytest.mark.unit
    def test_crank_nicolson_converges(self, line_grid, flat_line, gaussian_line):
        u = metric_propagate(flat_line, gaussian_line, 0.5, dt=1e-3, scheme="crank_nicolson")
        exact = free_gaussian(line_grid.axis, 0.5)
        assert np.linalg.norm(u.values - exact) <= 1e-3 * np.linalg.norm(exact)

    @pytest.mark.unit
    def test_frozen_identity_is_free(self, gaussian_line):
        frozen = frozen_propagate(np.eye(1), gaussian_line, 0.3)
        np.testing.assert_allclose(frozen.values, flat_propagate(gaussian_line, 0.3).values, atol=1e-13)


class TestMetricPropagation:
    """Test e^{it Delta_g} on a curved line."""

    @pytest.mark.unit
    def test_riemannian_mass_conserved(self, conformal_line, curved_data):
        series = propagate_series(conformal_line, curved_data, [0.1, 0.2], dt=1e-3)
        before = mass(conformal_line, curved_data)
        for i in range(len(series)):
            assert mass(conformal_line, series.slice(i)) == pytest.approx(before, rel=1e-9)

    @pytest.mark.unit
    def test_reversible(self, conformal_line, curved_data):
        """Forward then back to t = 0 recovers the data."""
        series = propagate_series(conformal_line, curved_data, [0.2, 0.0], dt=1e-3)
        assert (series.slice(1) - curved_data).l2_norm() <= 1e-9

    @pytest.mark.unit
    def test_schemes_agree(self, conformal_line, curved_data):
        cn = metric_propagate(conformal_line, curved_data, 0.2, dt=1e-3, scheme="crank_nicolson")
        strang = metric_propagate(conformal_line, curved_data, 0.2, dt=1e-3, scheme="strang")
        assert (cn - strang).l2_norm() <= 1e-3 * cn.l2_norm()

    @pytest.mark.unit
    def test_step_guard(self, conformal_line, curved_data):
        with pytest.raises(StepTooLarge):
            metric_propagate(conformal_line, curved_data, 1.0, dt=0.1)

    @pytest.mark.unit
    def test_times_must_be_monotone(self, conformal_line, curved_data):
        with pytest.raises(ConfigurationError):
            propagate_series(conformal_line, curved_data, [0.1, 0.3, 0.2], dt=1e-3)
        with pytest.raises(ConfigurationError):
            propagate_series(conformal_line, curved_data, [], dt=1e-3)

    @pytest.mark.unit
    def test_flat_difference_vanishes(self, flat_line, gaussian_line):
        assert propagator_difference(flat_line, gaussian_line, [0.1, 0.2], 1e-3) <= 1e-12
        assert propagator_difference(flat_line, gaussian_line, [0.1], 1e-3, norm="H1") <= 1e-12
        with pytest.raises(ConfigurationError):
            propagator_difference(flat_line, gaussian_line, [0.1], 1e-3, reference="frozen")


class TestGeneratorFactory:
    """Test generator lookup."""

    @pytest.mark.unit
    def test_supported_operators(self):
        assert GeneratorFactory.get_supported_operators() == [
            "laplace_beltrami", "A", "semiclassical", "localized",
        ]
        assert GeneratorFactory.is_operator_supported("A")
        assert not GeneratorFactory.is_operator_supported("wave")

    @pytest.mark.unit
    def test_invalid_requests(self, flat_line, line_grid, plane_grid):
        with pytest.raises(ConfigurationError):
            GeneratorFactory.create("wave", flat_line, line_grid)
        with pytest.raises(ConfigurationError):
            GeneratorFactory.create("semiclassical", flat_line, line_grid)
        with pytest.raises(ConfigurationError):
            GeneratorFactory.create("A", flat_line, plane_grid)


class TestNonlinearEvolution:
    """Test the Strang-split defocusing NLS."""

    @pytest.mark.unit
    def test_invariants(self, flat_line, gaussian_line):
        problem = NLSProblem(metric=flat_line, initial=gaussian_line, exponent=5, mu=1)
        state, series, history = nls_evolve(problem, 0.1, 1e-3, record_every=20)
        assert state.time == pytest.approx(0.1)
        assert len(series) == 6
        assert history[-1]["mass"] == pytest.approx(history[0]["mass"], rel=1e-12)
        assert history[-1]["energy"] == pytest.approx(history[0]["energy"], rel=1e-3)

    @pytest.mark.unit
    def test_linear_problem_is_free_flow(self, flat_line, gaussian_line):
        problem = NLSProblem(metric=flat_line, initial=gaussian_line, mu=0)
        state, series, _ = nls_evolve(problem, 0.2, 1e-2)
        assert series is None
        np.testing.assert_allclose(state.field.values, flat_propagate(gaussian_line, 0.2).values, atol=1e-12)

    @pytest.mark.unit
    def test_linear_energy(self, flat_line, gaussian_line):
        """E = 1/2 ||grad u||^2 when mu = 0."""
        assert energy(flat_line, gaussian_line, mu=0) == pytest.approx(0.5 * np.sqrt(np.pi / 2.0))

    @pytest.mark.unit
    def test_problem_validation(self, flat_line, gaussian_line, flat_plane):
        with pytest.raises(ConfigurationError):
            NLSProblem(metric=flat_line, initial=gaussian_line, mu=-1)
        with pytest.raises(ConfigurationError):
            NLSProblem(metric=flat_line, initial=gaussian_line, exponent=4)
        with pytest.raises(ConfigurationError):
            NLSProblem(metric=flat_plane, initial=gaussian_line)

    @pytest.mark.unit
    def test_picard_contracts_for_small_data(self, flat_line, gaussian_line):
        problem = NLSProblem(metric=flat_line, initial=0.5 * gaussian_line)
        report = picard_iterate(problem, np.linspace(0.0, 0.1, 11), iterations=3, dt=1e-3)
        assert report.iterations == 3
        assert len(report.ratios) == 2
        assert all(r < 0.5 for r in report.ratios)
        assert report.iterate.shape == (11, 256)

    @pytest.mark.unit
    def test_picard_needs_uniform_slices(self, flat_line, gaussian_line):
        problem = NLSProblem(metric=flat_line, initial=gaussian_line)
        with pytest.raises(ConfigurationError):
            picard_iterate(problem, [0.0, 0.1, 0.3], iterations=2, dt=1e-3)


class TestScatteringAndGuards:
    """Test wave-operator differences, boundary guards and checkpoints."""

    @pytest.mark.unit
    def test_flat_wave_operator_is_constant(self, flat_line, gaussian_line):
        table = scattering_comparison(flat_line, gaussian_line, [0.0, 0.25, 0.5], dt=1e-2)
        assert table.times == [0.0, 0.25, 0.5]
        assert max(table.differences) <= 1e-12
        assert table.boundary_mass <= 1e-8

    @pytest.mark.unit
    def test_boundary_contamination(self, flat_line, line_grid):
        wide = GridField.from_function(line_grid, lambda x: np.exp(-(x ** 2) / 64.0))
        with pytest.raises(BoundaryContaminated):
            scattering_comparison(flat_line, wide, [0.0, 0.5], dt=1e-2)
        assert check_boundary(wide, "wide") > 1e-8

    @pytest.mark.unit
    def test_checkpoint_round_trip(self, tmp_path, gaussian_line):
        state = EvolutionState(field=gaussian_line, time=0.25, diagnostics={"mass": 1.5, "energy": 0.75})
        path = write_checkpoint(state, tmp_path / "state.sclf")
        loaded = read_checkpoint(path)
        assert loaded.time == 0.25
        assert loaded.diagnostics == {"mass": 1.5, "energy": 0.75}
        np.testing.assert_array_equal(loaded.field.values, gaussian_line.values)
