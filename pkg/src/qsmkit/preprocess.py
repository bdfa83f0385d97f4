"""Laplacian phase unwrapping and SMV background-field removal.

Both operators work with the periodic Fourier Laplacian / sphere kernels;
callers are expected to evaluate results inside masks eroded away from the
volume boundary, where the periodic boundary assumption is harmless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .core import (
    ScalarVolume,
    VolumeGrid,
    fft_workers,
    frequency_axes,
    mask_erode,
    require_binary_mask,
    voxel_coords,
)

__all__ = ["SmvConfig", "laplacian_unwrap", "smv_filter", "sphere_kernel_spectrum"]


@dataclass(frozen=True)
class SmvConfig:
    """Spherical-mean-value filter parameters; conventional defaults."""

    radius_mm: float = 5.0
    tsvd_threshold: float = 0.05

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ValueError("SMV radius must be positive")
        if not 0.0 < self.tsvd_threshold < 1.0:
            raise ValueError("TSVD threshold must lie in (0, 1)")


def _laplacian_symbol(grid: VolumeGrid) -> np.ndarray:
    """Fourier multiplier of the Laplacian, -4*pi^2*|k|^2, on the rfft lattice."""
    fx, fy, fz = frequency_axes(grid)
    fz = fz[: grid.dims[2] // 2 + 1]
    k2 = (
        fx[:, None, None] ** 2 + fy[None, :, None] ** 2 + fz[None, None, :] ** 2
    )
    return -4.0 * np.pi**2 * k2


def _rfilter(data: np.ndarray, symbol: np.ndarray, dims) -> np.ndarray:
    spec = _fft.rfftn(data, workers=fft_workers())
    spec *= symbol
    return _fft.irfftn(spec, s=dims, workers=fft_workers())


def laplacian_unwrap(wrapped: ScalarVolume, mask: ScalarVolume) -> ScalarVolume:
    """Unwrap phase via the sine/cosine Laplacian identity solved in k-space.

    Computes inv_lap( cos(w)*lap(sin(w)) - sin(w)*lap(cos(w)) ) with the DC
    term dropped, then removes the in-mask mean. Adding any multiple of 2*pi
    to the input leaves the output unchanged.
    """
    wrapped.grid.require_compatible(mask.grid)
    require_binary_mask(mask)
    grid = wrapped.grid
    lap = _laplacian_symbol(grid)
    inv_lap = np.zeros_like(lap)
    nonzero = lap != 0.0
    inv_lap[nonzero] = 1.0 / lap[nonzero]

    sin_w = np.sin(wrapped.data)
    cos_w = np.cos(wrapped.data)
    rhs = cos_w * _rfilter(sin_w, lap, grid.dims) - sin_w * _rfilter(cos_w, lap, grid.dims)
    phi = _rfilter(rhs, inv_lap, grid.dims)

    inside = mask.data > 0.5
    if np.any(inside):
        phi = phi - phi[inside].mean()
    return ScalarVolume(grid, phi)


def sphere_kernel_spectrum(grid: VolumeGrid, radius_mm: float) -> np.ndarray:
    """rfft spectrum of a unit-integral sphere rasterized on the grid.

    The ball is built in image space around index 0 (wrapped offsets) and
    normalized to unit sum before transforming, so the DC value is exactly 1
    and the deconvolution below inverts the same discrete operator.
    """
    xs, ys, zs = voxel_coords(grid)
    dist2 = xs[:, None, None] ** 2 + ys[None, :, None] ** 2 + zs[None, None, :] ** 2
    ball = (dist2 <= radius_mm * radius_mm).astype(np.float64)
    total = ball.sum()
    if total == 0:
        raise ValueError("SMV radius smaller than half a voxel")
    ball /= total
    shifts = [-(n // 2) for n in grid.dims]
    ball = np.roll(ball, shifts, axis=(0, 1, 2))
    return _fft.rfftn(ball, workers=fft_workers())


def smv_filter(phase: ScalarVolume, mask: ScalarVolume, cfg: SmvConfig = SmvConfig()):
    """SHARP-style background removal: high-pass with (1 - sphere mean),
    erode the mask by the sphere radius, then TSVD-deconvolve inside it.

    Returns (tissue_phase, reliable_mask); tissue_phase is exactly zero
    outside reliable_mask.
    """
    phase.grid.require_compatible(mask.grid)
    require_binary_mask(mask)
    grid = phase.grid
    dims = grid.dims

    s = sphere_kernel_spectrum(grid, cfg.radius_mm)
    high_pass = 1.0 - s

    spec = _fft.rfftn(phase.data, workers=fft_workers())
    spec *= high_pass
    h = _fft.irfftn(spec, s=dims, workers=fft_workers())

    reliable = mask_erode(mask, cfg.radius_mm)
    spec = _fft.rfftn(reliable.data * h, workers=fft_workers())
    keep = np.abs(high_pass) > cfg.tsvd_threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        deconvolved = spec / high_pass
    spec = np.where(keep, deconvolved, 0.0)
    tissue = _fft.irfftn(spec, s=dims, workers=fft_workers())
    tissue *= reliable.data
    return ScalarVolume(grid, tissue), reliable
