"""Linear benchmark inversions: TKD, COSMOS, and the L2 closed form.

All three act pointwise in k-space and are linear in the input phase.
Reconstructions follow the DC-value-0 kernel convention, so outputs are
zero-mean and comparisons should be made after in-mask mean removal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .core import OrientationDataset, ScalarVolume, VolumeGrid, fft_workers
from .dipole import DipoleKernel, dipole_kernel

__all__ = [
    "TkdConfig",
    "CosmosConfig",
    "L2Config",
    "tkd",
    "tkd_multiplier",
    "cosmos",
    "l2_closedform",
    "gradient_energy_spectrum",
]


@dataclass(frozen=True)
class TkdConfig:
    """Threshold below which |d| is replaced by delta (sign preserved)."""

    delta: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.delta <= 2.0 / 3.0:
            raise ValueError("TKD delta must lie in (0, 2/3]")


@dataclass(frozen=True)
class CosmosConfig:
    """Threshold on the combined kernel energy sum_r d_r^2."""

    eps: float = 1e-6

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("COSMOS eps must be positive")


@dataclass(frozen=True)
class L2Config:
    """Weight of the discrete-gradient penalty in the closed-form solve."""

    lam: float = 0.01

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("L2 lambda must be >= 0")


def tkd_multiplier(d: np.ndarray, delta: float) -> np.ndarray:
    """Spectral multiplier: 1/d where |d| > delta, else sgn(d)/delta.

    sgn(0) = 0, so exact kernel zeros (including DC) map to 0 instead of
    injecting an arbitrary sign.
    """
    with np.errstate(divide="ignore"):
        inv = np.where(np.abs(d) > delta, 1.0 / np.where(d != 0, d, 1.0), np.sign(d) / delta)
    return inv


def _spectral_inversion(phase: ScalarVolume, multiplier: np.ndarray) -> ScalarVolume:
    dims = phase.grid.dims
    spec = _fft.rfftn(phase.data, workers=fft_workers())
    spec *= multiplier
    return ScalarVolume(phase.grid, _fft.irfftn(spec, s=dims, workers=fft_workers()))


def tkd(phase: ScalarVolume, kernel: DipoleKernel, cfg: TkdConfig = TkdConfig()) -> ScalarVolume:
    """Truncated k-space division of the tissue phase by the dipole kernel."""
    phase.grid.require_compatible(kernel.grid)
    return _spectral_inversion(phase, tkd_multiplier(kernel.half, cfg.delta))


def cosmos(dataset: OrientationDataset, cfg: CosmosConfig = CosmosConfig()) -> ScalarVolume:
    """Multi-orientation closed form (sum_r d_r phi_r) / (sum_r d_r^2).

    Spectral points whose combined kernel energy stays below eps are zeroed;
    with enough distinct orientations that support covers everything but DC.
    Orientations are accumulated in ascending entry order.
    """
    grid = dataset.grid
    dims = grid.dims
    numerator = None
    denominator = None
    for entry in dataset.entries:
        d = dipole_kernel(grid, entry.orientation).half
        spec = _fft.rfftn(entry.phase.data, workers=fft_workers())
        spec *= d
        if numerator is None:
            numerator = spec
            denominator = d * d
        else:
            numerator += spec
            denominator = denominator + d * d
    keep = denominator > cfg.eps
    with np.errstate(divide="ignore", invalid="ignore"):
        chi_spec = numerator / denominator
    chi_spec = np.where(keep, chi_spec, 0.0)
    return ScalarVolume(grid, _fft.irfftn(chi_spec, s=dims, workers=fft_workers()))


def gradient_energy_spectrum(grid: VolumeGrid) -> np.ndarray:
    """Fourier symbol of the 3D forward-difference gradient energy.

    E(k) = sum_i |1 - exp(-2*pi*i*n_i/N_i)|^2 on the rfft lattice; zero only
    at DC.
    """
    terms = []
    for ax, n_ax in enumerate(grid.dims):
        idx = np.arange(n_ax)
        if ax == 2:
            idx = idx[: n_ax // 2 + 1]
        terms.append(np.abs(1.0 - np.exp(-2j * np.pi * idx / n_ax)) ** 2)
    return (
        terms[0][:, None, None] + terms[1][None, :, None] + terms[2][None, None, :]
    )


def l2_closedform(
    phase: ScalarVolume, kernel: DipoleKernel, cfg: L2Config = L2Config()
) -> ScalarVolume:
    """Closed-form Tikhonov-gradient-regularized inversion.

    chi(k) = d*phi(k) / (d^2 + lambda*E(k)); points where the denominator is
    exactly zero (DC, and the kernel zero cone when lambda = 0) map to 0.
    """
    phase.grid.require_compatible(kernel.grid)
    d = kernel.half
    denom = d * d + cfg.lam * gradient_energy_spectrum(phase.grid)
    dims = phase.grid.dims
    spec = _fft.rfftn(phase.data, workers=fft_workers())
    spec *= d
    with np.errstate(divide="ignore", invalid="ignore"):
        chi_spec = spec / denom
    chi_spec = np.where(denom > 0, chi_spec, 0.0)
    return ScalarVolume(phase.grid, _fft.irfftn(chi_spec, s=dims, workers=fft_workers()))
