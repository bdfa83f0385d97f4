"""Minimal NIfTI-1 volume IO and PGM slice export.

Only the subset needed by the pipeline is supported and anything else is
rejected loudly: single-file little-endian NIfTI-1 ("n+1"), 3D, float32 or
float64 data, pixdim spacing, scl_slope/scl_inter applied on load. Files are
written as float32 with vox_offset 352. Data is stored x-fastest, matching
the volume layout convention.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import ScalarVolume, VolumeGrid

__all__ = ["NiftiFormatError", "read_nifti", "write_nifti", "write_pgm", "slice_to_pgm"]

_HEADER_SIZE = 348
_MAGIC_SINGLE = b"n+1\x00"
_DT_FLOAT32 = 16
_DT_FLOAT64 = 64
_DTYPES = {_DT_FLOAT32: np.dtype("<f4"), _DT_FLOAT64: np.dtype("<f8")}


class NiftiFormatError(ValueError):
    """Raised for files outside the supported NIfTI-1 subset."""


def write_nifti(path, volume: ScalarVolume):
    """Write a single-file little-endian float32 NIfTI-1 volume."""
    nx, ny, nz = volume.grid.dims
    dx, dy, dz = volume.grid.spacing
    header = bytearray(_HEADER_SIZE)
    struct.pack_into("<i", header, 0, _HEADER_SIZE)  # sizeof_hdr
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)  # dim
    struct.pack_into("<h", header, 70, _DT_FLOAT32)  # datatype
    struct.pack_into("<h", header, 72, 32)  # bitpix
    struct.pack_into("<8f", header, 76, 1.0, dx, dy, dz, 0.0, 0.0, 0.0, 0.0)  # pixdim
    struct.pack_into("<f", header, 108, 352.0)  # vox_offset
    struct.pack_into("<f", header, 112, 1.0)  # scl_slope
    struct.pack_into("<f", header, 116, 0.0)  # scl_inter
    struct.pack_into("<4s", header, 344, _MAGIC_SINGLE)
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(b"\x00\x00\x00\x00")  # extension flag: none
        fh.write(volume.data.astype("<f4").tobytes(order="F"))


def read_nifti(path) -> ScalarVolume:
    """Read a volume written by write_nifti (or the supported subset of it)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_SIZE)
        if len(header) < _HEADER_SIZE:
            raise NiftiFormatError(f"{path}: file shorter than a NIfTI-1 header")
        (sizeof_hdr,) = struct.unpack_from("<i", header, 0)
        if sizeof_hdr != _HEADER_SIZE:
            raise NiftiFormatError(
                f"{path}: sizeof_hdr={sizeof_hdr}, expected 348 (little-endian NIfTI-1)"
            )
        magic = struct.unpack_from("<4s", header, 344)[0]
        if magic != _MAGIC_SINGLE:
            raise NiftiFormatError(f"{path}: unsupported magic {magic!r}, expected 'n+1'")
        dim = struct.unpack_from("<8h", header, 40)
        if dim[0] != 3:
            raise NiftiFormatError(f"{path}: dim[0]={dim[0]}, only 3D volumes are supported")
        (datatype,) = struct.unpack_from("<h", header, 70)
        if datatype not in _DTYPES:
            raise NiftiFormatError(
                f"{path}: datatype {datatype} unsupported (need 16=float32 or 64=float64)"
            )
        pixdim = struct.unpack_from("<8f", header, 76)
        (vox_offset,) = struct.unpack_from("<f", header, 108)
        (scl_slope,) = struct.unpack_from("<f", header, 112)
        (scl_inter,) = struct.unpack_from("<f", header, 116)

        dims = (dim[1], dim[2], dim[3])
        spacing = tuple(float(p) for p in pixdim[1:4])
        if any(s <= 0 for s in spacing):
            raise NiftiFormatError(f"{path}: non-positive pixdim spacing {spacing}")
        grid = VolumeGrid(dims, spacing)

        offset = int(round(vox_offset))
        if offset < _HEADER_SIZE:
            raise NiftiFormatError(f"{path}: vox_offset {vox_offset} before end of header")
        fh.seek(offset)
        dtype = _DTYPES[datatype]
        raw = fh.read(grid.n_voxels * dtype.itemsize)
        if len(raw) != grid.n_voxels * dtype.itemsize:
            raise NiftiFormatError(f"{path}: truncated data section")

    samples = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        samples = samples * slope + scl_inter
    return ScalarVolume(grid, samples.reshape(dims, order="F"))


def write_pgm(path, pixels: np.ndarray):
    """Write an 8-bit binary PGM (P5) image; pixels are (rows, cols) uint8."""
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.astype(np.uint8).tobytes(order="C"))


_SLICE_PLANES = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}


def slice_to_pgm(volume: ScalarVolume, axis: str, index: int, window_min: float, window_max: float, path):
    """Export one slice as grayscale PGM, mapping [window_min, window_max]
    linearly to [0, 255] with clamping (round half-up).

    Rows run top-to-bottom along the increasing second in-plane axis.
    """
    if axis not in _SLICE_PLANES:
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    ax = "xyz".index(axis)
    if not 0 <= index < volume.grid.dims[ax]:
        raise ValueError(f"slice index {index} out of range for axis {axis} of extent {volume.grid.dims[ax]}")
    if not window_max > window_min:
        raise ValueError("window_max must exceed window_min")
    plane = np.take(volume.data, index, axis=ax)  # (first in-plane, second in-plane)
    normalized = np.clip((plane - window_min) / (window_max - window_min), 0.0, 1.0)
    pixels = np.floor(normalized * 255.0 + 0.5).astype(np.uint8)
    write_pgm(path, pixels.T)  # rows: second in-plane axis
