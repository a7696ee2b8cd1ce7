"""
Pytest configuration and fixtures for SCLENS tests.
"""

import numpy as np
import pytest

from sclens.models import Grid, GridField
from sclens.services.geometry import build_metric
from sclens.services.spectral import clear_eigen_cache


@pytest.fixture
def rng():
    """Deterministic generator for randomized inputs."""
    return np.random.default_rng(20240611)


@pytest.fixture
def line_grid():
    """1D box [-16, 16) with 256 points."""
    return Grid(dim=1, length=32.0, points=256)


@pytest.fixture
def plane_grid():
    """2D box [-8, 8)^2 with 64 points per axis."""
    return Grid(dim=2, length=16.0, points=64)


@pytest.fixture
def flat_line():
    return build_metric("flat", dim=1)


@pytest.fixture
def flat_plane():
    return build_metric("flat", dim=2)


@pytest.fixture
def conformal_line():
    """Conformal bump g = exp(2 eps chi) delta with eps = 0.3."""
    return build_metric("conformal-bump", epsilon=0.3, r_supp=1.0, dim=1)


@pytest.fixture
def lens_plane():
    """Lens g^jk = (1 + eps chi) delta with eps = 0.3."""
    return build_metric("lens", epsilon=0.3, r_supp=1.0, dim=2)


@pytest.fixture
def gaussian_line(line_grid):
    """Unit-width Gaussian centred at the origin."""
    return GridField.from_function(line_grid, lambda x: np.exp(-(x ** 2)), kind="gaussian")


@pytest.fixture(autouse=True)
def _fresh_eigen_cache():
    """Eigenbases are cached per metric and grid; start every test clean."""
    clear_eigen_cache()
    yield
    clear_eigen_cache()
