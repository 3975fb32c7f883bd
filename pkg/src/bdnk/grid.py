"""Periodic grid on [0, 2pi)^3: spectral calculus and discrete Sobolev norms.

Grid fields are real arrays whose last three axes are the spatial
directions (x fastest in the logical indexing f[..., ix, iy, iz]).  The
Sobolev norm follows the Fourier-multiplier convention

    ||f||_r^2 = (2pi)^3 sum_k (1 + |k|^2)^r |fhat_k|^2

with fhat the normalized coefficients, so that ||1||_r = (2pi)^{3/2} and
||f||_0 equals the L^2(T^3) norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGrid:
    """Uniform N^3 grid with integer wavenumber lattice."""

    N: int

    def __post_init__(self):
        if self.N < 8:
            raise ValueError("grid needs N >= 8")
        if self.N & (self.N - 1):
            raise ValueError("N must be a power of two")

    @property
    def h(self) -> float:
        return TWO_PI / self.N

    @property
    def x(self):
        return np.arange(self.N) * self.h

    def coordinate_mesh(self):
        """Meshgrid (X, Y, Z), each shaped (N, N, N), indexing 'ij'."""
        x = self.x
        return np.meshgrid(x, x, x, indexing="ij")

    @property
    def wavenumbers(self):
        """Integer wavenumbers in FFT layout, shape (N,)."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N)

    def k_squared_mesh(self):
        k = self.wavenumbers
        kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
        return kx**2 + ky**2 + kz**2

    def dealias_mask(self):
        """True where all |k_i| <= N/3 (the 2/3 rule)."""
        k = self.wavenumbers
        keep = np.abs(k) <= self.N / 3.0
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


def validate_field(f):
    """Reject NaN/Inf grid data at ingestion."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("grid field contains non-finite values")
    return f


def spectral_derivative(f, axis_spatial: int, grid: TorusGrid):
    """Differentiate along spatial direction 0, 1, or 2 (exact for
    trigonometric polynomials up to Nyquist, whose mode is dropped)."""
    f = np.asarray(f)
    axis = f.ndim - 3 + axis_spatial
    k = grid.wavenumbers.copy()
    k[grid.N // 2] = 0.0  # odd derivative has no consistent Nyquist image
    shape = [1] * f.ndim
    shape[axis] = grid.N
    fk = np.fft.fft(f, axis=axis)
    fk *= 1j * k.reshape(shape)
    return np.real(np.fft.ifft(fk, axis=axis))


def spatial_gradient(f, grid: TorusGrid):
    """All three spatial derivatives, stacked on a new leading axis."""
    return np.stack([spectral_derivative(f, i, grid) for i in range(3)])


def fourier_coefficients(f, grid: TorusGrid):
    """Normalized coefficients fhat with f = sum fhat_k exp(i k.x)."""
    f = np.asarray(f)
    return np.fft.fftn(f, axes=(-3, -2, -1)) / grid.N**3


def sobolev_norm(f, r: float, grid: TorusGrid):
    """Discrete H^r norm; components (leading axes) add in quadrature."""
    if not -6.0 <= r <= 6.0:
        raise ValueError("Sobolev order r must lie in [-6, 6]")
    fk = fourier_coefficients(f, grid)
    weight = (1.0 + grid.k_squared_mesh()) ** r
    total = np.sum(weight * np.abs(fk) ** 2)
    return float(np.sqrt(TWO_PI**3 * total))


def l2_norm(f, grid: TorusGrid):
    """Physical-space quadrature of the L^2 norm (trapezoid = exact here)."""
    f = np.asarray(f)
    return float(np.sqrt(grid.h**3 * np.sum(f * f)))


def dealias(f, grid: TorusGrid):
    """Zero all Fourier modes with any |k_i| > N/3."""
    f = np.asarray(f)
    fk = np.fft.fftn(f, axes=(-3, -2, -1))
    fk *= grid.dealias_mask()
    return np.real(np.fft.ifftn(fk, axes=(-3, -2, -1)))
