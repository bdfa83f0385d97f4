"""Shared fixtures and independent oracle implementations.

The oracles here deliberately avoid the library's code paths: the DFT oracle
multiplies explicit transform matrices, the erosion oracle checks voxel-pair
distances by brute force, and the dipole oracle builds its frequency lattice
with numpy.fft.fftfreq.
"""

import numpy as np
import pytest

from qsmkit import Orientation, ScalarVolume, VolumeGrid


def dft_matrix(n: int, sign: int = -1) -> np.ndarray:
    j = np.arange(n)
    return np.exp(sign * 2j * np.pi * np.outer(j, j) / n)


def naive_dft3(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT by explicit matrix contraction."""
    fx, fy, fz = (dft_matrix(n) for n in x.shape)
    return np.einsum("ai,bj,ck,ijk->abc", fx, fy, fz, x.astype(np.complex128))


def naive_idft3(x: np.ndarray) -> np.ndarray:
    """Inverse DFT with 1/N normalization by explicit matrix contraction."""
    fx, fy, fz = (dft_matrix(n, sign=+1) for n in x.shape)
    out = np.einsum("ai,bj,ck,ijk->abc", fx, fy, fz, x.astype(np.complex128))
    return out / x.size


def index_mirror(values: np.ndarray) -> np.ndarray:
    return np.roll(values[::-1, ::-1, ::-1], shift=(1, 1, 1), axis=(0, 1, 2))


def oracle_dipole_values(dims, spacing, b) -> np.ndarray:
    """Dipole kernel oracle: fftfreq lattice, DC zero, mirror-averaged."""
    axes = [np.fft.fftfreq(n, d=s) for n, s in zip(dims, spacing)]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij")
    k2 = kx**2 + ky**2 + kz**2
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 1.0 / 3.0 - (kx * b[0] + ky * b[1] + kz * b[2]) ** 2 / k2
    d[0, 0, 0] = 0.0
    return 0.5 * (d + index_mirror(d))


def brute_erode(mask: np.ndarray, spacing, radius: float) -> np.ndarray:
    """Per-voxel distance check; outside the volume counts as zero."""
    dims = mask.shape
    reach = [int(np.floor(radius / s)) for s in spacing]
    offsets = []
    for di in range(-reach[0], reach[0] + 1):
        for dj in range(-reach[1], reach[1] + 1):
            for dk in range(-reach[2], reach[2] + 1):
                dist2 = (di * spacing[0]) ** 2 + (dj * spacing[1]) ** 2 + (dk * spacing[2]) ** 2
                if dist2 <= radius * radius:
                    offsets.append((di, dj, dk))
    out = np.zeros(dims)
    for i in range(dims[0]):
        for j in range(dims[1]):
            for k in range(dims[2]):
                if mask[i, j, k] != 1.0:
                    continue
                keep = 1.0
                for di, dj, dk in offsets:
                    a, b_, c = i + di, j + dj, k + dk
                    if not (0 <= a < dims[0] and 0 <= b_ < dims[1] and 0 <= c < dims[2]):
                        keep = 0.0
                        break
                    if mask[a, b_, c] != 1.0:
                        keep = 0.0
                        break
                out[i, j, k] = keep
    return out


def rot_x(deg: float) -> Orientation:
    t = np.deg2rad(deg)
    return Orientation((0.0, float(np.sin(t)), float(np.cos(t))))


def rot_y(deg: float) -> Orientation:
    t = np.deg2rad(deg)
    return Orientation((float(np.sin(t)), 0.0, float(np.cos(t))))


EZ = Orientation((0.0, 0.0, 1.0))


def random_volume(grid: VolumeGrid, rng, scale: float = 1.0) -> ScalarVolume:
    return ScalarVolume(grid, scale * rng.standard_normal(grid.dims))


def ones_volume(grid: VolumeGrid) -> ScalarVolume:
    return ScalarVolume(grid, np.ones(grid.dims))


@pytest.fixture
def grid16():
    return VolumeGrid((16, 16, 16))


@pytest.fixture
def grid8():
    return VolumeGrid((8, 8, 8))
