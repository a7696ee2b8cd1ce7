"""
Unit tests for metrics, derived tensors and Laplace-Beltrami.
"""

import numpy as np
import pytest

from sclens.core.exceptions import MetricSupportError, NonPositiveDefinite, UnsupportedDimension
from sclens.models import Grid, GridField, MetricTable, bump
from sclens.services import fourier
from sclens.services.geometry import (
    build_metric,
    c3_estimate,
    christoffel,
    conjugated_operator,
    laplace_beltrami,
    load_metric_table,
    principal_symbol,
    save_metric_table,
    semiclassical_apply,
    table_from_metric,
)


class TestBuildMetric:
    """Test metric construction and validation."""

    @pytest.mark.unit
    def test_lens_must_stay_positive(self):
        """1 + eps chi < 0 at the centre for eps < -1."""
        with pytest.raises(NonPositiveDefinite):
            build_metric("lens", epsilon=-1.5, dim=2)

    @pytest.mark.unit
    def test_unsupported_dimension(self):
        with pytest.raises(UnsupportedDimension):
            build_metric("flat", dim=4)

    @pytest.mark.unit
    def test_perturbation_supported_in_ball(self, lens_plane):
        """g equals delta outside |x| < r_supp."""
        outside = np.array([[1.0, 0.0], [0.8, 0.7], [3.0, -2.0]])
        np.testing.assert_array_equal(lens_plane.g(outside), np.broadcast_to(np.eye(2), (3, 2, 2)))
        centre = lens_plane.g_inv(np.zeros(2))
        np.testing.assert_allclose(centre, 1.3 * np.eye(2))

    @pytest.mark.unit
    def test_bump_values(self):
        chi, grad, _ = bump(np.array([[0.0], [0.5], [1.0]]), 1.0)
        assert chi[0] == 1.0
        assert chi[1] == pytest.approx(np.exp(1.0 - 1.0 / 0.75))
        assert chi[2] == 0.0
        assert grad[0, 0] == 0.0

    @pytest.mark.unit
    def test_flat_christoffel_vanishes(self, flat_plane, rng):
        pts = rng.uniform(-2, 2, size=(10, 2))
        assert np.all(christoffel(flat_plane, pts) == 0.0)

    @pytest.mark.unit
    def test_christoffel_symmetric_in_lower_indices(self, lens_plane, rng):
        pts = rng.uniform(-0.9, 0.9, size=(20, 2))
        gamma = christoffel(lens_plane, pts)
        np.testing.assert_allclose(gamma, np.swapaxes(gamma, -1, -2), atol=1e-14)

    @pytest.mark.unit
    def test_principal_symbol(self, lens_plane):
        value = principal_symbol(lens_plane, np.zeros(2), np.array([3.0, 4.0]))
        assert value == pytest.approx(1.3 * 25.0)

    @pytest.mark.unit
    def test_c3_estimate(self, flat_line, conformal_line):
        """Sup norms vanish for the flat metric and the zeroth order sees exp(2 eps) - 1."""
        assert c3_estimate(flat_line)["c3"] == 0.0
        estimate = c3_estimate(conformal_line)
        assert estimate["order0"] == pytest.approx(np.exp(0.6) - 1.0, rel=1e-3)
        assert estimate["c3"] >= estimate["order1"] > 0.0


class TestLaplaceBeltrami:
    """Test the operator on grid fields."""

    @pytest.mark.unit
    def test_flat_matches_spectral_laplacian(self, flat_line, gaussian_line):
        x = gaussian_line.grid.axis
        result = laplace_beltrami(flat_line, gaussian_line)
        np.testing.assert_allclose(result.values.real, (4 * x ** 2 - 2) * np.exp(-(x ** 2)), atol=1e-10)

    @pytest.mark.unit
    @pytest.mark.parametrize("dim", [1, 2])
    def test_flat_equals_multiplier_on_every_mode(self, dim, rng):
        """A random field has Nyquist content; -|k|^2 must still hold there."""
        grid = Grid(dim=dim, length=8.0, points=64 if dim == 1 else 32)
        values = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
        result = laplace_beltrami(build_metric("flat", dim=dim), GridField(grid, values))
        expected = fourier.apply_multiplier(grid, -grid.k_squared, values)
        assert np.linalg.norm(result.values - expected) <= 1e-10 * np.linalg.norm(expected)

    @pytest.mark.unit
    def test_symmetric_in_riemannian_measure(self, lens_plane, plane_grid, rng):
        """<Delta_g u, v>_g = <u, Delta_g v>_g for smooth u, v."""
        x, y = plane_grid.coords
        u = GridField(plane_grid, np.exp(-(x ** 2) - y ** 2) * (1 + 0.5j * x))
        v = GridField(plane_grid, np.exp(-((x - 0.3) ** 2) - (y + 0.2) ** 2))
        weight = lens_plane.sqrt_det(plane_grid.points_array)
        left = np.sum(laplace_beltrami(lens_plane, u).values * np.conj(v.values) * weight)
        right = np.sum(u.values * np.conj(laplace_beltrami(lens_plane, v).values) * weight)
        assert abs(left - right) <= 1e-9 * abs(left)

    @pytest.mark.unit
    def test_flat_conjugated_operator_has_no_potential(self, flat_line, line_grid):
        op = conjugated_operator(flat_line, line_grid)
        assert np.all(op.potential == 0.0)

    @pytest.mark.unit
    def test_conjugated_operator_annihilates_rho(self, conformal_line):
        """A = rho (-Delta_g) rho^-1 sends rho to zero."""
        grid = Grid(dim=1, length=8.0, points=1024)
        op = conjugated_operator(conformal_line, grid)
        rho = conformal_line.rho(grid.points_array)
        residual = op.apply(rho)
        assert np.max(np.abs(residual)) <= 1e-3 * np.max(np.abs(op.potential))

    @pytest.mark.unit
    def test_flat_semiclassical_generator(self, flat_line, gaussian_line):
        """A(h)/h = -h Delta when the metric is flat."""
        grid = gaussian_line.grid
        h = 0.1
        result = semiclassical_apply(flat_line, grid, h, gaussian_line.values)
        expected = -h * fourier.divergence(grid, fourier.gradient(grid, gaussian_line.values))
        np.testing.assert_allclose(result, expected, atol=1e-12)


class TestMetricTables:
    """Test custom tabulated metrics."""

    @pytest.mark.unit
    def test_table_file_round_trip(self, tmp_path, lens_plane):
        table = table_from_metric(lens_plane, length=4.0, points=16)
        save_metric_table(table, tmp_path / "lens.tab")
        loaded = load_metric_table(tmp_path / "lens.tab")
        assert (loaded.dim, loaded.length, loaded.points) == (2, 4.0, 16)
        np.testing.assert_array_equal(loaded.values, table.values)

    @pytest.mark.unit
    def test_custom_table_interpolates_builtin(self):
        """A tabulated lens reproduces the closed-form metric inside the support."""
        lens = build_metric("lens", epsilon=0.3, dim=1)
        table = table_from_metric(lens, length=8.0, points=512)
        custom = build_metric("custom-table", r_supp=1.0, dim=1, table=table)
        pts = np.linspace(-0.95, 0.95, 37)
        np.testing.assert_allclose(custom.g(pts), lens.g(pts), atol=1e-4)
        np.testing.assert_allclose(custom.g_inv(pts), lens.g_inv(pts), atol=1e-4)

    @pytest.mark.unit
    def test_table_outside_support_rejected(self):
        values = np.ones((16, 1, 1))
        values[0] = 1.5
        table = MetricTable(dim=1, length=4.0, points=16, values=values)
        with pytest.raises(MetricSupportError):
            build_metric("custom-table", r_supp=1.0, dim=1, table=table)
