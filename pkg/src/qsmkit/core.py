"""Grids, volumes, orientations, and the spectral/morphological primitives.

Conventions used throughout the package:

* volumes are ``(Nx, Ny, Nz)`` float64 arrays; the on-disk linear order is
  x-fastest (Fortran ravel),
* the forward FFT is unnormalized, the inverse carries the ``1/N`` factor
  (numpy's convention), with the DC coefficient at index ``(0, 0, 0)``,
* frequencies are physical, in cycles/mm, so anisotropic voxels produce
  correct dipole kernels,
* physical voxel coordinates put the origin at voxel index ``dims // 2``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft
from scipy import ndimage as _ndimage

__all__ = [
    "GridMismatchError",
    "VolumeGrid",
    "ScalarVolume",
    "ComplexVolume",
    "Orientation",
    "Acquisition",
    "OrientationDataset",
    "fft3",
    "ifft3",
    "freq_coords",
    "frequency_axes",
    "voxel_coords",
    "mask_erode",
    "fft_workers",
]


class GridMismatchError(ValueError):
    """Raised when an operation receives volumes on incompatible grids."""


def fft_workers() -> int:
    """Worker count for FFT calls; QSM_THREADS caps it, 0 or unset means auto."""
    raw = os.environ.get("QSM_THREADS", "").strip()
    if raw in ("", "0"):
        return os.cpu_count() or 1
    return max(1, int(raw))


@dataclass(frozen=True)
class VolumeGrid:
    """Sampling lattice: integer extents and voxel spacing in millimeters."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or len(spacing) != 3:
            raise ValueError("grid requires 3 extents and 3 spacings")
        if any(n < 1 for n in dims):
            raise ValueError(f"grid extents must be >= 1, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"voxel spacing must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def compatible(self, other: "VolumeGrid") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def require_compatible(self, other: "VolumeGrid"):
        if not self.compatible(other):
            raise GridMismatchError(
                f"grids differ: {self.dims}@{self.spacing} vs {other.dims}@{other.spacing}"
            )


def _checked_samples(grid, data, dtype):
    arr = np.array(data, dtype=dtype, order="C", copy=True)
    if arr.shape != grid.dims:
        if arr.size == grid.n_voxels and arr.ndim == 1:
            arr = arr.reshape(grid.dims, order="F")
        else:
            raise ValueError(f"sample shape {arr.shape} does not match grid {grid.dims}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("volume samples must be finite (no NaN/Inf)")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """Real-valued 3D field on a grid. Immutable; operations return new volumes.

    ``data`` is float64 with shape ``grid.dims``; a flat buffer in x-fastest
    order is accepted and reshaped.
    """

    grid: VolumeGrid
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _checked_samples(self.grid, self.data, np.float64))

    @classmethod
    def zeros(cls, grid: VolumeGrid) -> "ScalarVolume":
        return cls(grid, np.zeros(grid.dims))

    @classmethod
    def full(cls, grid: VolumeGrid, value: float) -> "ScalarVolume":
        return cls(grid, np.full(grid.dims, float(value)))


@dataclass(frozen=True, eq=False)
class ComplexVolume:
    """Complex-valued 3D field on a grid (k-space intermediate storage)."""

    grid: VolumeGrid
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _checked_samples(self.grid, self.data, np.complex128))


@dataclass(frozen=True)
class Orientation:
    """Unit B0 direction expressed in the volume coordinate frame."""

    b: tuple[float, float, float]

    def __post_init__(self):
        b = tuple(float(c) for c in self.b)
        if len(b) != 3:
            raise ValueError("orientation requires 3 components")
        norm = float(np.sqrt(b[0] ** 2 + b[1] ** 2 + b[2] ** 2))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"orientation must be unit-norm within 1e-9, got |b|={norm!r}")
        object.__setattr__(self, "b", b)

    @classmethod
    def from_vector(cls, v) -> "Orientation":
        """Normalize an arbitrary nonzero vector into an Orientation."""
        arr = np.asarray(v, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if arr.shape != (3,) or norm == 0.0:
            raise ValueError(f"cannot normalize {v!r} into a direction")
        return cls(tuple(arr / norm))


@dataclass(frozen=True, eq=False)
class Acquisition:
    """One head rotation: phase (radians), magnitude (>= 0), B0 direction."""

    phase: ScalarVolume
    magnitude: ScalarVolume
    orientation: Orientation


def is_binary(arr: np.ndarray) -> bool:
    return bool(np.all((arr == 0.0) | (arr == 1.0)))


def require_binary_mask(mask: ScalarVolume):
    if not is_binary(mask.data):
        raise ValueError("mask must be binary (all samples 0 or 1)")


@dataclass(frozen=True, eq=False)
class OrientationDataset:
    """Co-registered per-orientation acquisitions plus a shared binary mask."""

    entries: tuple[Acquisition, ...]
    mask: ScalarVolume

    def __post_init__(self):
        entries = tuple(self.entries)
        if len(entries) < 1:
            raise ValueError("dataset requires at least one orientation")
        grid = self.mask.grid
        for i, e in enumerate(entries):
            grid.require_compatible(e.phase.grid)
            grid.require_compatible(e.magnitude.grid)
            if np.any(e.magnitude.data < 0):
                raise ValueError(f"entry {i}: magnitude must be non-negative")
        require_binary_mask(self.mask)
        object.__setattr__(self, "entries", entries)

    @property
    def grid(self) -> VolumeGrid:
        return self.mask.grid

    @property
    def n_orientations(self) -> int:
        return len(self.entries)


def fft3(v) -> ComplexVolume:
    """Unnormalized forward 3D DFT; DC at linear index 0."""
    spectrum = _fft.fftn(np.asarray(v.data, dtype=np.complex128), workers=fft_workers())
    return ComplexVolume(v.grid, spectrum)


def ifft3(v: ComplexVolume) -> ComplexVolume:
    """Inverse 3D DFT with 1/(Nx*Ny*Nz) normalization."""
    out = _fft.ifftn(np.asarray(v.data, dtype=np.complex128), workers=fft_workers())
    return ComplexVolume(v.grid, out)


_AXES = {"x": 0, "y": 1, "z": 2}


def freq_coords(grid: VolumeGrid, axis: str, index: int) -> float:
    """Physical frequency (cycles/mm) of an FFT-ordered index along one axis.

    Returns n/(N*delta) with n = index for index < ceil(N/2), else index - N.
    """
    ax = _AXES[axis] if isinstance(axis, str) else int(axis)
    n_ax = grid.dims[ax]
    if not 0 <= index < n_ax:
        raise ValueError(f"index {index} out of range for axis of extent {n_ax}")
    n = index if index < (n_ax + 1) // 2 else index - n_ax
    return n / (n_ax * grid.spacing[ax])


def frequency_axes(grid: VolumeGrid):
    """Per-axis 1D arrays of physical frequencies in FFT order."""
    out = []
    for n_ax, delta in zip(grid.dims, grid.spacing):
        idx = np.arange(n_ax)
        signed = np.where(idx < (n_ax + 1) // 2, idx, idx - n_ax)
        out.append(signed / (n_ax * delta))
    return tuple(out)


def voxel_coords(grid: VolumeGrid):
    """Per-axis 1D arrays of physical voxel-center coordinates (mm).

    Origin sits at voxel index dims//2 on each axis.
    """
    return tuple(
        (np.arange(n_ax) - n_ax // 2) * delta for n_ax, delta in zip(grid.dims, grid.spacing)
    )


def ball_offsets(spacing, radius_mm: float) -> np.ndarray:
    """Boolean stencil of voxel offsets whose centers lie within radius_mm."""
    reach = [int(np.floor(radius_mm / s)) for s in spacing]
    axes = [np.arange(-r, r + 1) * s for r, s in zip(reach, spacing)]
    dist2 = (
        axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2 + axes[2][None, None, :] ** 2
    )
    return dist2 <= radius_mm * radius_mm


def mask_erode(mask: ScalarVolume, radius_mm: float) -> ScalarVolume:
    """Erode a binary mask with a physical ball: a voxel survives iff every
    voxel center within radius_mm of it (volume boundary counts as 0) is 1."""
    require_binary_mask(mask)
    if radius_mm < 0:
        raise ValueError("erosion radius must be >= 0")
    structure = ball_offsets(mask.grid.spacing, radius_mm)
    if structure.size == 1:
        return ScalarVolume(mask.grid, mask.data)
    eroded = _ndimage.binary_erosion(mask.data > 0.5, structure=structure, border_value=0)
    return ScalarVolume(mask.grid, eroded.astype(np.float64))
