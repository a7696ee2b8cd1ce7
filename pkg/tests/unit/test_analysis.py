"""
Unit tests for slope fits, Morawetz identities, local smoothing and profile extraction.
"""

import numpy as np
import pytest

from sclens.core.exceptions import ConfigurationError, NonPositiveValue, TooFewPoints, TooFewSlices
from sclens.models import FieldSeries, GridField
from sclens.services.analysis import (
    bourgain_morawetz_ratio,
    bourgain_morawetz_sweep,
    bourgain_result,
    bracket_bilaplacian,
    bracket_hessian,
    bracket_laplacian,
    fit_decay_slope,
    greedy_profile_extract,
    inverse_strichartz_witness,
    local_smoothing_functional,
    log_slope,
    morawetz_report,
    norm_suite,
    smooth_transition,
    smoothing_probe_packet,
    synthetic_bubble,
    witness_time_ladder,
)
from sclens.services.propagate import propagate_series

LEVELS = [1.0, 2.0, 4.0, 8.0, 16.0]


@pytest.fixture
def free_series(flat_line, gaussian_line):
    """Eleven slices of the free evolution of e^{-x^2} on [0, 0.1]."""
    return propagate_series(flat_line, gaussian_line, np.linspace(0.0, 0.1, 11), dt=0.01)


class TestSlopeFits:
    """Test log-log regression."""

    @pytest.mark.unit
    def test_exact_power_law(self):
        h = [0.2, 0.1, 0.05, 0.025, 0.0125]
        fit = fit_decay_slope(h, [3.0 * x ** -1.5 for x in h])
        assert fit.slope == pytest.approx(-1.5, abs=1e-12)
        assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)
        assert fit.width <= 1e-10
        assert fit.points == 5

    @pytest.mark.unit
    def test_rejected_inputs(self):
        with pytest.raises(TooFewPoints):
            fit_decay_slope([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
        with pytest.raises(NonPositiveValue):
            fit_decay_slope([1.0, 2.0, 4.0, 8.0], [1.0, 0.0, 4.0, 8.0])
        with pytest.raises(ConfigurationError):
            fit_decay_slope([1.0, 2.0, 4.0, 8.0], [1.0, 2.0])

    @pytest.mark.unit
    def test_short_series(self):
        fit = log_slope([1.0, 4.0], [2.0, 32.0])
        assert fit.slope == pytest.approx(2.0)
        assert fit.width == float("inf")
        assert log_slope([1.0], [1.0]) is None


class TestBracketWeight:
    """Test closed forms for <x> = (1 + |x|^2)^(1/2)."""

    @pytest.mark.unit
    def test_values_at_origin(self):
        assert bracket_laplacian(np.array(0.0), 3) == pytest.approx(3.0)
        assert bracket_bilaplacian(np.array(0.0), 3) == pytest.approx(-15.0)

    @pytest.mark.unit
    def test_hessian_trace_is_laplacian(self, rng):
        pts = rng.normal(size=(12, 3))
        trace = np.trace(bracket_hessian(pts), axis1=-2, axis2=-1)
        np.testing.assert_allclose(trace, bracket_laplacian(np.linalg.norm(pts, axis=1), 3), rtol=1e-12)

    @pytest.mark.unit
    def test_one_dimensional_bilaplacian(self):
        """d^4/dx^4 <x> = (12 x^2 - 3) / <x>^7."""
        x = np.linspace(-3.0, 3.0, 13)
        expected = (12.0 * x ** 2 - 3.0) / (1.0 + x ** 2) ** 3.5
        np.testing.assert_allclose(bracket_bilaplacian(np.abs(x), 1), expected, rtol=1e-12)

    @pytest.mark.unit
    def test_smooth_transition(self):
        values = smooth_transition(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
        np.testing.assert_allclose(values, [0.0, 0.0, 0.5, 1.0, 1.0])


class TestMorawetz:
    """Test the virial identity and the time-integrated Bourgain ratio."""

    @pytest.mark.unit
    def test_free_evolution_satisfies_identity(self, flat_line, free_series):
        report = morawetz_report(free_series, flat_line, radius=4.0)
        rhs = np.array(report.hessian_term) + np.array(report.bilaplacian_term)
        assert len(report.times) == 9
        assert report.max_residual <= 1e-2 * np.max(np.abs(rhs))
        assert all(term == 0.0 for term in report.nonlinear_term)

    @pytest.mark.unit
    def test_zero_solution(self, flat_line, line_grid):
        series = FieldSeries(line_grid, np.linspace(0.0, 0.4, 5), np.zeros((5, 256), dtype=complex))
        report = morawetz_report(series, flat_line, radius=4.0)
        assert report.max_residual == 0.0
        assert report.derivative_bound == 0.0

    @pytest.mark.unit
    def test_invalid_series(self, flat_line, line_grid):
        four = FieldSeries(line_grid, np.linspace(0.0, 0.3, 4), np.zeros((4, 256), dtype=complex))
        with pytest.raises(TooFewSlices):
            morawetz_report(four, flat_line, radius=4.0)
        uneven = FieldSeries(line_grid, np.array([0.0, 0.1, 0.2, 0.4, 0.5]),
                             np.zeros((5, 256), dtype=complex))
        with pytest.raises(ConfigurationError):
            morawetz_report(uneven, flat_line, radius=4.0)
        five = FieldSeries(line_grid, np.linspace(0.0, 0.4, 5), np.zeros((5, 256), dtype=complex))
        with pytest.raises(ConfigurationError):
            morawetz_report(five, flat_line, radius=8.0)

    @pytest.mark.unit
    def test_bourgain_ratio(self):
        result = bourgain_result([0.0, 0.5, 1.0], [1.0, 1.0, 1.0], initial_energy=2.0)
        assert result.raw_integral == pytest.approx(1.0)
        assert result.ratio == pytest.approx(0.5)
        assert not result.degenerate

    @pytest.mark.unit
    def test_nested_interval_sweep(self, flat_line, free_series):
        results, fit = bourgain_morawetz_sweep(free_series, flat_line, [0.02, 0.05, 0.1])
        assert [r.interval_length for r in results] == pytest.approx([0.02, 0.05, 0.1])
        raws = [r.raw_integral for r in results]
        assert raws == sorted(raws) and raws[0] > 0.0
        assert fit is not None and fit.slope > 0.0
        whole = bourgain_morawetz_ratio(free_series, flat_line)
        assert whole.ratio == pytest.approx(results[-1].ratio)
        with pytest.raises(TooFewSlices):
            bourgain_morawetz_sweep(free_series, flat_line, [0.001])

    @pytest.mark.unit
    def test_zero_energy_is_degenerate(self):
        result = bourgain_result([0.0, 1.0], [0.0, 0.0], initial_energy=0.0)
        assert result.degenerate
        assert result.ratio == 0.0


class TestNormsAndSmoothing:
    """Test norm tables and the local smoothing functional."""

    @pytest.mark.unit
    def test_norm_suite(self, flat_line, free_series):
        suite = norm_suite(free_series, flat_line)
        assert suite.holder_consistent()
        np.testing.assert_allclose(suite.l2, (np.pi / 2.0) ** 0.25, rtol=1e-12)
        assert suite.linf[0] == pytest.approx(1.0)
        assert suite.z_proxy > 0.0

    @pytest.mark.unit
    def test_low_frequency_data_is_invisible(self, flat_line, gaussian_line):
        value = local_smoothing_functional(flat_line, gaussian_line, level=8.0, band=2.0, window=1.0,
                                           tube_radius=16.0)
        assert value <= 1e-10

    @pytest.mark.unit
    def test_probe_stays_in_tube(self, flat_line, line_grid):
        """A unit H^1-dot packet that stays in the tube gives (2 T N^-2)^(1/2)."""
        phi = smoothing_probe_packet(line_grid, level=2.0, band=1.0, tube_radius=16.0)
        value = local_smoothing_functional(flat_line, phi, level=2.0, band=1.0, window=1.0, tube_radius=16.0)
        assert value == pytest.approx(np.sqrt(0.5), rel=1e-3)


class TestProfiles:
    """Test concentration witnesses and greedy bubble extraction."""

    @pytest.mark.unit
    def test_time_ladder(self):
        assert witness_time_ladder(0.1, 2) == [0.0, 0.1, -0.1, 0.2, -0.2]

    @pytest.mark.unit
    def test_zero_field_witness(self, flat_plane, plane_grid):
        witness = inverse_strichartz_witness(flat_plane, GridField.zeros(plane_grid), 0.0, 0.0, LEVELS)
        assert witness.value == 0.0
        assert witness.witness_N == LEVELS[0]
        assert witness.ratio == 0.0

    @pytest.mark.unit
    def test_bubble_witness(self, flat_plane, plane_grid):
        """P_N^2 of a width-1/2 Gaussian peaks at N = 4 at its centre."""
        bubble = synthetic_bubble(plane_grid, 0.5, [0.0, 0.0])
        witness = inverse_strichartz_witness(flat_plane, bubble, 0.5, 1.0, LEVELS, threads=2)
        assert witness.witness_N == 4.0
        np.testing.assert_allclose(witness.witness_x, [0.0, 0.0], atol=1e-12)
        assert witness.witness_t == 0.0
        assert witness.proxy > 0.0

    @pytest.mark.unit
    def test_witness_follows_lattice_translation(self, flat_plane, plane_grid):
        """Rolling the data by whole samples moves x* by the same offset and keeps the value."""
        bubble = synthetic_bubble(plane_grid, 0.5, [0.0, 0.0])
        moved = GridField(plane_grid, np.roll(bubble.values, (5, -3), axis=(0, 1)))
        base = inverse_strichartz_witness(flat_plane, bubble, 0.5, 1.0, LEVELS)
        shifted = inverse_strichartz_witness(flat_plane, moved, 0.5, 1.0, LEVELS)
        assert shifted.value == pytest.approx(base.value, rel=1e-10)
        assert shifted.witness_N == base.witness_N
        step = plane_grid.spacing
        np.testing.assert_allclose(shifted.witness_x, [base.witness_x[0] + 5 * step,
                                                       base.witness_x[1] - 3 * step], atol=1e-12)

    @pytest.mark.unit
    def test_single_bubble_extraction(self, flat_plane, plane_grid):
        bubble = synthetic_bubble(plane_grid, 0.5, [0.0, 0.0])
        result = greedy_profile_extract(flat_plane, bubble, max_bubbles=3, levels=LEVELS)
        assert len(result.frames) == 1
        assert 0.25 <= result.frames[0].scale <= 1.0
        assert result.remainder_norm <= 2e-2 * result.input_norm
        assert result.decoupling_defect <= 5e-2
        assert not result.stalled

    @pytest.mark.unit
    def test_degenerate_requests(self, flat_plane, plane_grid):
        empty = greedy_profile_extract(flat_plane, GridField.zeros(plane_grid), 2, LEVELS)
        assert empty.frames == []
        assert empty.input_norm == 0.0
        with pytest.raises(ConfigurationError):
            greedy_profile_extract(flat_plane, GridField.zeros(plane_grid), 9, LEVELS)
