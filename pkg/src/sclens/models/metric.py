"""Riemannian metrics on R^d that are Euclidean outside a ball."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import ConfigurationError, UnsupportedDimension


class MetricFamily(str, Enum):
    """Built-in perturbation families."""

    FLAT = "flat"
    CONFORMAL = "conformal-bump"
    LENS = "lens"
    CUSTOM = "custom-table"


def bump(points: np.ndarray, r_supp: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C-infinity bump exp(1 - 1/(1 - |x|^2/R^2)) with its gradient and Hessian.

    ``points`` has the coordinate index last. Returns chi (...), grad (..., d) and
    hess (..., d, d); all three vanish identically for |x| >= R.
    """
    x = np.asarray(points, dtype=float)
    s = np.sum(x ** 2, axis=-1) / r_supp ** 2
    inside = s < 1.0
    q = np.where(inside, 1.0 - s, 1.0)
    chi = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    chi_s = np.where(inside, -chi / q ** 2, 0.0)
    chi_ss = np.where(inside, chi * (1.0 / q ** 4 - 2.0 / q ** 3), 0.0)
    dim = x.shape[-1]
    grad = chi_s[..., None] * 2.0 * x / r_supp ** 2
    hess = (
        chi_ss[..., None, None] * 4.0 * x[..., :, None] * x[..., None, :] / r_supp ** 4
        + chi_s[..., None, None] * 2.0 * np.eye(dim) / r_supp ** 2
    )
    return chi, grad, hess


@dataclass(frozen=True)
class MetricTable:
    """Tabulated metric g_jk on the periodic grid [-L/2, L/2)^d with n points per axis."""

    dim: int
    length: float
    points: int
    values: np.ndarray = field(compare=False, repr=False)

    @property
    def axis(self) -> np.ndarray:
        return -0.5 * self.length + (self.length / self.points) * np.arange(self.points)


@dataclass(frozen=True)
class Metric:
    """Metric g = delta + compactly supported perturbation.

    Built-in families are isotropic, g_jk = G(chi) delta_jk, so every derived tensor
    follows from the bump by the chain rule. Custom tables are interpolated and
    differentiated by fourth-order centred differences.
    """

    dim: int
    family: MetricFamily = MetricFamily.FLAT
    epsilon: float = 0.0
    r_supp: float = 1.0
    table: Optional[MetricTable] = field(default=None, compare=False, repr=False)
    table_digest: str = ""

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise UnsupportedDimension(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.r_supp <= 0:
            raise ConfigurationError("support radius must be positive")
        if self.family == MetricFamily.CUSTOM and self.table is None:
            raise ConfigurationError("custom-table metric requires a table")

    @property
    def is_flat(self) -> bool:
        return self.family == MetricFamily.FLAT or (
            self.family != MetricFamily.CUSTOM and self.epsilon == 0.0
        )

    # Scalar profiles for the isotropic families: g_jk = G(chi) delta, g^jk = H(chi) delta.

    def _profile(self, chi: np.ndarray) -> Tuple[np.ndarray, ...]:
        eps = self.epsilon
        one = np.ones_like(chi)
        if self.is_flat:
            zero = np.zeros_like(chi)
            return one, zero, zero, one, zero, zero
        if self.family == MetricFamily.CONFORMAL:
            big_g = np.exp(2.0 * eps * chi)
            big_h = np.exp(-2.0 * eps * chi)
            return (
                big_g, 2.0 * eps * big_g, 4.0 * eps ** 2 * big_g,
                big_h, -2.0 * eps * big_h, 4.0 * eps ** 2 * big_h,
            )
        if self.family == MetricFamily.LENS:
            big_h = 1.0 + eps * chi
            return (
                1.0 / big_h, -eps / big_h ** 2, 2.0 * eps ** 2 / big_h ** 3,
                big_h, eps * one, np.zeros_like(chi),
            )
        raise ConfigurationError(f"no isotropic profile for family {self.family}")

    def _points(self, x: np.ndarray) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 0 or pts.shape[-1] != self.dim:
            pts = pts[..., None] if self.dim == 1 else pts
        if pts.shape[-1] != self.dim:
            raise ConfigurationError(f"points must have {self.dim} coordinates")
        return pts

    def _isotropic(self, x: np.ndarray):
        pts = self._points(x)
        chi, grad, hess = bump(pts, self.r_supp)
        return pts, chi, grad, hess, self._profile(chi)

    def g(self, x: np.ndarray) -> np.ndarray:
        """Covariant metric g_jk(x), shape (..., d, d)."""
        if self.family == MetricFamily.CUSTOM:
            return self._custom().g(self._points(x))
        _, _, _, _, (big_g, *_rest) = self._isotropic(x)
        return big_g[..., None, None] * np.eye(self.dim)

    def g_inv(self, x: np.ndarray) -> np.ndarray:
        """Inverse metric g^jk(x), shape (..., d, d)."""
        if self.family == MetricFamily.CUSTOM:
            return self._custom().g_inv(self._points(x))
        _, _, _, _, prof = self._isotropic(x)
        return prof[3][..., None, None] * np.eye(self.dim)

    def dg(self, x: np.ndarray) -> np.ndarray:
        """Derivatives d_l g_jk, shape (..., d[l], d[j], d[k])."""
        if self.family == MetricFamily.CUSTOM:
            return self._custom().dg(self._points(x))
        _, _, grad, _, prof = self._isotropic(x)
        return (prof[1][..., None] * grad)[..., :, None, None] * np.eye(self.dim)

    def dg_inv(self, x: np.ndarray) -> np.ndarray:
        """Derivatives d_l g^jk, shape (..., d[l], d[j], d[k])."""
        if self.family == MetricFamily.CUSTOM:
            return self._custom().dg_inv(self._points(x))
        _, _, grad, _, prof = self._isotropic(x)
        return (prof[4][..., None] * grad)[..., :, None, None] * np.eye(self.dim)

    def d2g_inv(self, x: np.ndarray) -> np.ndarray:
        """Second derivatives d_a d_b g^jk, shape (..., d[a], d[b], d[j], d[k])."""
        if self.family == MetricFamily.CUSTOM:
            return self._custom().d2g_inv(self._points(x))
        _, _, grad, hess, prof = self._isotropic(x)
        second = (
            prof[5][..., None, None] * grad[..., :, None] * grad[..., None, :]
            + prof[4][..., None, None] * hess
        )
        return second[..., :, :, None, None] * np.eye(self.dim)

    def sqrt_det(self, x: np.ndarray) -> np.ndarray:
        """Measure weight sqrt|g|."""
        if self.family == MetricFamily.CUSTOM:
            return np.sqrt(np.linalg.det(self.g(x)))
        _, _, _, _, prof = self._isotropic(x)
        return prof[0] ** (0.5 * self.dim)

    def rho(self, x: np.ndarray) -> np.ndarray:
        """Square root of the Riemannian density, |g|^(1/4)."""
        return np.sqrt(self.sqrt_det(x))

    def _custom(self):
        from ..services.geometry import tabulated_metric

        return tabulated_metric(self)
