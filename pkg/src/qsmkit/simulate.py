"""Ground-truth phantoms and noisy single/multi-orientation acquisitions.

Noise is applied in the complex signal domain (magnitude * exp(i*phase) plus
independent Gaussian real/imaginary components), so low-SNR phase statistics
behave like real data instead of additive phase noise. Streams are drawn from
a Philox4x64 counter-based generator keyed by (seed, orientation index),
which makes datasets bit-reproducible and orientations independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .core import (
    Acquisition,
    OrientationDataset,
    ScalarVolume,
    VolumeGrid,
    voxel_coords,
)
from .dipole import dipole_kernel, forward_field

__all__ = ["Shape", "PhantomSpec", "NoiseSpec", "make_phantom", "simulate_acquisition", "wrap_phase"]

_KINDS = {"sphere": _accel.KIND_SPHERE, "cylinder": _accel.KIND_CYLINDER, "cuboid": _accel.KIND_CUBOID}
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Shape:
    """One phantom primitive.

    size parameters in mm by kind:
      sphere   (radius,)
      cylinder (radius, length)   with `axis` naming the symmetry axis
      cuboid   (lx, ly, lz)       full edge lengths

    Containment is boundary-inclusive; centers are in the voxel_coords frame
    (origin at voxel index dims//2).
    """

    kind: str
    center: tuple[float, float, float]
    size: tuple[float, ...]
    chi: float
    axis: str = "z"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        expected = {"sphere": 1, "cylinder": 2, "cuboid": 3}[self.kind]
        size = tuple(float(s) for s in np.atleast_1d(self.size))
        if len(size) != expected:
            raise ValueError(f"{self.kind} needs {expected} size parameter(s), got {size}")
        if any(s <= 0 for s in size):
            raise ValueError(f"shape sizes must be positive, got {size}")
        if self.axis not in _AXIS_INDEX:
            raise ValueError(f"cylinder axis must be x, y or z, got {self.axis!r}")
        center = tuple(float(c) for c in self.center)
        if len(center) != 3:
            raise ValueError("shape center requires 3 coordinates")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "chi", float(self.chi))


@dataclass(frozen=True)
class PhantomSpec:
    """Shape list plus background susceptibility; later shapes overwrite earlier."""

    shapes: tuple[Shape, ...] = ()
    background: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(self, "background", float(self.background))


@dataclass(frozen=True)
class NoiseSpec:
    """Complex-noise standard deviation per channel and the stream seed."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")


def _pack_shapes(shapes):
    n = len(shapes)
    kinds = np.empty(n, dtype=np.int64)
    centers = np.empty((n, 3), dtype=np.float64)
    sizes = np.zeros((n, 3), dtype=np.float64)
    axes = np.zeros(n, dtype=np.int64)
    chis = np.empty(n, dtype=np.float64)
    for i, s in enumerate(shapes):
        kinds[i] = _KINDS[s.kind]
        centers[i] = s.center
        chis[i] = s.chi
        axes[i] = _AXIS_INDEX[s.axis]
        if s.kind == "sphere":
            sizes[i, 0] = s.size[0]
        elif s.kind == "cylinder":
            sizes[i, 0] = s.size[0]
            sizes[i, 1] = s.size[1] / 2.0  # store half-length
        else:
            sizes[i] = [e / 2.0 for e in s.size]  # store half-extents
    return kinds, centers, sizes, axes, chis


def make_phantom(grid: VolumeGrid, spec: PhantomSpec) -> ScalarVolume:
    """Rasterize a PhantomSpec: each voxel takes the chi of the last shape
    containing its center, or the background value."""
    xs, ys, zs = voxel_coords(grid)
    kinds, centers, sizes, axes, chis = _pack_shapes(spec.shapes)
    data = _accel.rasterize_shapes(xs, ys, zs, kinds, centers, sizes, axes, chis, spec.background)
    return ScalarVolume(grid, data)


def wrap_phase(x: np.ndarray) -> np.ndarray:
    """Wrap values into (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def _noise_rng(seed: int, r: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(r)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_acquisition(
    chi: ScalarVolume,
    magnitude: ScalarVolume,
    orientations,
    noise: NoiseSpec = NoiseSpec(),
    mask: ScalarVolume | None = None,
) -> OrientationDataset:
    """Forward-simulate wrapped phase and noisy magnitude per orientation.

    For rotation r the clean phase is the dipole field of chi; the complex
    signal is magnitude*exp(i*phase) plus N(0, sigma) noise on each channel,
    and the returned (phase, magnitude) are its argument in (-pi, pi] and
    modulus. ``mask`` defaults to magnitude > 0.
    """
    grid = chi.grid
    grid.require_compatible(magnitude.grid)
    if np.any(magnitude.data < 0):
        raise ValueError("magnitude must be non-negative")
    if mask is None:
        mask = ScalarVolume(grid, (magnitude.data > 0).astype(np.float64))
    else:
        grid.require_compatible(mask.grid)

    entries = []
    for r, orientation in enumerate(orientations):
        kernel = dipole_kernel(grid, orientation)
        clean = forward_field(chi, kernel).data
        signal = magnitude.data * np.exp(1j * clean)
        if noise.sigma > 0:
            rng = _noise_rng(noise.seed, r)
            eta = rng.normal(0.0, noise.sigma, size=(2,) + grid.dims)
            signal = signal + eta[0] + 1j * eta[1]
        phase = np.angle(signal)
        phase[phase <= -np.pi] = np.pi  # arg convention: (-pi, pi]
        entries.append(
            Acquisition(
                phase=ScalarVolume(grid, phase),
                magnitude=ScalarVolume(grid, np.abs(signal)),
                orientation=orientation,
            )
        )
    return OrientationDataset(entries=tuple(entries), mask=mask)
