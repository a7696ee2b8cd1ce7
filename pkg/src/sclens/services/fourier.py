"""FFT wrappers and spectral differentiation on periodic grids."""

from typing import Callable, Sequence, Union

import numpy as np
import scipy.fft

from ..models.grid import Grid

Multiplier = Union[np.ndarray, Callable[..., np.ndarray]]

_WORKERS = 1


def set_workers(workers: int) -> None:
    """Set the thread count used by every transform in this process."""
    global _WORKERS
    _WORKERS = max(1, int(workers))


def fft(values: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    return scipy.fft.fftn(values, axes=axes, workers=_WORKERS)


def ifft(values: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    return scipy.fft.ifftn(values, axes=axes, workers=_WORKERS)


def apply_multiplier(grid: Grid, symbol: Multiplier, values: np.ndarray) -> np.ndarray:
    """inverse-FFT(m * FFT(values)); a callable symbol receives the wavenumber arrays."""
    m = symbol(*grid.wavenumbers) if callable(symbol) else symbol
    return ifft(m * fft(values))


def _wavenumbers(grid: Grid, keep_nyquist: bool):
    return grid.wavenumbers if keep_nyquist else grid.odd_wavenumbers


def derivative(grid: Grid, values: np.ndarray, axis: int, keep_nyquist: bool = False) -> np.ndarray:
    """Spectral first derivative along ``axis``; the Nyquist mode is dropped unless ``keep_nyquist``."""
    return ifft(1j * _wavenumbers(grid, keep_nyquist)[axis] * fft(values))


def gradient(grid: Grid, values: np.ndarray, keep_nyquist: bool = False) -> np.ndarray:
    """Spectral gradient, shape (d, *grid.shape)."""
    spectrum = fft(values)
    return np.stack([ifft(1j * k * spectrum) for k in _wavenumbers(grid, keep_nyquist)])


def divergence(grid: Grid, flux: np.ndarray, keep_nyquist: bool = False) -> np.ndarray:
    """Spectral divergence of a vector field of shape (d, *grid.shape)."""
    return sum(derivative(grid, flux[j], j, keep_nyquist) for j in range(grid.dim))


def hessian(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Spectral Hessian, shape (d, d, *grid.shape)."""
    spectrum = fft(values)
    k = grid.odd_wavenumbers
    out = np.empty((grid.dim, grid.dim) + grid.shape, dtype=complex)
    for a in range(grid.dim):
        for b in range(a, grid.dim):
            if a == b:
                out[a, a] = ifft(-(grid.wavenumbers[a] ** 2) * spectrum)
            else:
                out[a, b] = out[b, a] = ifft(-k[a] * k[b] * spectrum)
    return out


def retained_wavenumber(grid: Grid, values: np.ndarray, threshold: float) -> float:
    """Largest |k| whose Fourier amplitude exceeds ``threshold`` times the peak amplitude."""
    amplitude = np.abs(fft(values))
    peak = amplitude.max()
    if peak == 0.0:
        return 0.0
    kmag = np.sqrt(grid.k_squared)
    return float(kmag[amplitude > threshold * peak].max())
