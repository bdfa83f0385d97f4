import numpy as np
import pytest

from qsmkit import (
    Acquisition,
    ComplexVolume,
    GridMismatchError,
    Orientation,
    OrientationDataset,
    ScalarVolume,
    VolumeGrid,
    fft3,
    freq_coords,
    ifft3,
    mask_erode,
)
from qsmkit.core import frequency_axes

from conftest import EZ, brute_erode, naive_dft3, naive_idft3, ones_volume, random_volume


# ---------------------------------------------------------------- types


def test_grid_validation():
    with pytest.raises(ValueError):
        VolumeGrid((0, 4, 4))
    with pytest.raises(ValueError):
        VolumeGrid((4, 4, 4), (1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        VolumeGrid((4, 4))
    g = VolumeGrid((4, 5, 6), (1.0, 0.5, 2.0))
    assert g.n_voxels == 120
    assert g.compatible(VolumeGrid((4, 5, 6), (1.0, 0.5, 2.0)))
    assert not g.compatible(VolumeGrid((4, 5, 6), (1.0, 0.5, 2.5)))
    with pytest.raises(GridMismatchError):
        g.require_compatible(VolumeGrid((4, 5, 7)))


def test_volume_validation(grid8):
    with pytest.raises(ValueError):
        ScalarVolume(grid8, np.zeros((8, 8, 7)))
    bad = np.zeros(grid8.dims)
    bad[1, 2, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarVolume(grid8, bad)
    flat = np.arange(512, dtype=float)
    v = ScalarVolume(grid8, flat)  # x-fastest linear order
    assert v.data[1, 0, 0] == 1.0
    assert v.data[0, 1, 0] == 8.0
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 5.0  # volumes are immutable


def test_volume_copies_input(grid8):
    arr = np.zeros(grid8.dims)
    v = ScalarVolume(grid8, arr)
    arr[0, 0, 0] = 7.0
    assert v.data[0, 0, 0] == 0.0


def test_orientation_validation():
    with pytest.raises(ValueError):
        Orientation((0.0, 0.0, 2.0))
    with pytest.raises(ValueError):
        Orientation.from_vector((0.0, 0.0, 0.0))
    o = Orientation.from_vector((3.0, 0.0, 4.0))
    assert o.b == (0.6, 0.0, 0.8)


def test_dataset_validation(grid8):
    ones = ones_volume(grid8)
    entry = Acquisition(ones, ones, EZ)
    with pytest.raises(ValueError):
        OrientationDataset(entries=(), mask=ones)
    neg = ScalarVolume(grid8, -np.ones(grid8.dims))
    with pytest.raises(ValueError):
        OrientationDataset(entries=(Acquisition(ones, neg, EZ),), mask=ones)
    half = ScalarVolume(grid8, np.full(grid8.dims, 0.5))
    with pytest.raises(ValueError):
        OrientationDataset(entries=(entry,), mask=half)
    other = ones_volume(VolumeGrid((8, 8, 9)))
    with pytest.raises(GridMismatchError):
        OrientationDataset(entries=(Acquisition(other, other, EZ),), mask=ones)
    ds = OrientationDataset(entries=(entry, entry), mask=ones)
    assert ds.n_orientations == 2


# ---------------------------------------------------------------- fft


def test_fft3_constant(grid8):
    spec = fft3(ScalarVolume.full(grid8, 2.5)).data
    assert spec[0, 0, 0] == pytest.approx(2.5 * 512, rel=1e-14)
    spec_flat = spec.ravel().copy()
    spec_flat[0] = 0
    assert np.abs(spec_flat).max() < 1e-10 * 2.5 * 512


def test_fft3_impulse(grid8):
    impulse = np.zeros(grid8.dims)
    impulse[0, 0, 0] = 1.0
    spec = fft3(ScalarVolume(grid8, impulse)).data
    assert np.allclose(spec, 1.0, atol=1e-13)


def test_fft3_matches_naive_dft():
    rng = np.random.default_rng(11)
    g = VolumeGrid((8, 8, 8))
    v = random_volume(g, rng)
    expected = naive_dft3(v.data)
    got = fft3(v).data
    assert np.linalg.norm(got - expected) <= 1e-12 * np.linalg.norm(expected)


def test_ifft3_matches_naive_and_roundtrip():
    rng = np.random.default_rng(12)
    g = VolumeGrid((8, 8, 8))
    spec = ComplexVolume(g, rng.standard_normal(g.dims) + 1j * rng.standard_normal(g.dims))
    expected = naive_idft3(spec.data)
    got = ifft3(spec).data
    assert np.linalg.norm(got - expected) <= 1e-12 * np.linalg.norm(expected)

    v = random_volume(g, rng)
    back = ifft3(fft3(v)).data
    assert np.linalg.norm(back - v.data) <= 1e-12 * np.linalg.norm(v.data)


def test_ifft3_trivials(grid8):
    ones_spec = ComplexVolume(grid8, np.ones(grid8.dims, dtype=complex))
    out = ifft3(ones_spec).data
    assert out[0, 0, 0] == pytest.approx(1.0, rel=1e-13)
    rest = out.ravel().copy()
    rest[0] = 0
    assert np.abs(rest).max() < 1e-13

    zero = ComplexVolume(grid8, np.zeros(grid8.dims, dtype=complex))
    assert np.all(ifft3(zero).data == 0)


def test_fft_adjoint_identity(grid16):
    rng = np.random.default_rng(13)
    x = random_volume(grid16, rng)
    y = ComplexVolume(grid16, rng.standard_normal(grid16.dims) + 1j * rng.standard_normal(grid16.dims))
    lhs = np.vdot(fft3(x).data, y.data)
    rhs = np.vdot(x.data, grid16.n_voxels * ifft3(y).data)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_parseval(grid16, seed):
    v = random_volume(grid16, np.random.default_rng(seed))
    lhs = np.linalg.norm(fft3(v).data) ** 2
    rhs = grid16.n_voxels * np.linalg.norm(v.data) ** 2
    assert abs(lhs - rhs) <= 1e-10 * rhs


def test_fft_linearity(grid8):
    rng = np.random.default_rng(14)
    v1, v2 = random_volume(grid8, rng), random_volume(grid8, rng)
    a, b = 1.7, -0.3
    combo = fft3(ScalarVolume(grid8, a * v1.data + b * v2.data)).data
    parts = a * fft3(v1).data + b * fft3(v2).data
    assert np.linalg.norm(combo - parts) <= 1e-12 * np.linalg.norm(parts)

    s1, s2 = fft3(v1), fft3(v2)
    combo_inv = ifft3(ComplexVolume(grid8, a * s1.data + b * s2.data)).data
    parts_inv = a * ifft3(s1).data + b * ifft3(s2).data
    assert np.linalg.norm(combo_inv - parts_inv) <= 1e-12 * np.linalg.norm(parts_inv)


# ---------------------------------------------------------------- frequencies


def test_freq_coords_examples():
    g = VolumeGrid((8, 8, 8))
    assert freq_coords(g, "x", 0) == 0.0
    assert freq_coords(g, "x", 1) == 0.125
    assert freq_coords(g, "x", 7) == -0.125
    with pytest.raises(ValueError):
        freq_coords(g, "x", 8)
    with pytest.raises(ValueError):
        freq_coords(g, "x", -1)


@pytest.mark.parametrize("n", [7, 8, 12])
def test_freq_coords_odd_symmetry(n):
    g = VolumeGrid((n, n, n), (0.7, 0.7, 0.7))
    for idx in range(1, (n + 1) // 2):
        assert freq_coords(g, "y", idx) == -freq_coords(g, "y", n - idx)


def test_frequency_axes_match_freq_coords():
    g = VolumeGrid((6, 9, 4), (1.0, 0.5, 2.0))
    axes = frequency_axes(g)
    for ax, name in enumerate("xyz"):
        for idx in range(g.dims[ax]):
            assert axes[ax][idx] == freq_coords(g, name, idx)


# ---------------------------------------------------------------- erosion


def test_mask_erode_radius_zero_is_identity(grid16):
    rng = np.random.default_rng(15)
    mask = ScalarVolume(grid16, (rng.random(grid16.dims) > 0.4).astype(float))
    assert np.array_equal(mask_erode(mask, 0.0).data, mask.data)


def test_mask_erode_all_ones_16_cube():
    g = VolumeGrid((16, 16, 16))
    eroded = mask_erode(ones_volume(g), 2.0).data
    expected = np.zeros(g.dims)
    expected[2:14, 2:14, 2:14] = 1.0
    assert np.array_equal(eroded, expected)
    assert np.array_equal(eroded, brute_erode(np.ones(g.dims), g.spacing, 2.0))


def test_mask_erode_random_vs_brute():
    g = VolumeGrid((10, 9, 8), (1.0, 1.5, 0.8))
    rng = np.random.default_rng(16)
    mask = (rng.random(g.dims) > 0.3).astype(float)
    got = mask_erode(ScalarVolume(g, mask), 1.6).data
    assert np.array_equal(got, brute_erode(mask, g.spacing, 1.6))


def test_mask_erode_edge_cases(grid8):
    zeros = ScalarVolume.zeros(grid8)
    assert np.all(mask_erode(zeros, 3.0).data == 0)
    with pytest.raises(ValueError):
        mask_erode(ScalarVolume(grid8, np.full(grid8.dims, 0.3)), 1.0)
    with pytest.raises(ValueError):
        mask_erode(zeros, -1.0)


def test_mask_erode_monotone_and_composition():
    g = VolumeGrid((12, 12, 12))
    rng = np.random.default_rng(17)
    big = (rng.random(g.dims) > 0.25).astype(float)
    small = big * (rng.random(g.dims) > 0.2)
    eroded_small = mask_erode(ScalarVolume(g, small), 1.5).data
    eroded_big = mask_erode(ScalarVolume(g, big), 1.5).data
    assert np.all(eroded_small <= eroded_big)

    r1, r2 = 1.0, 1.8
    composed = mask_erode(mask_erode(ScalarVolume(g, big), r2), r1).data
    bound = mask_erode(ScalarVolume(g, big), max(r1, r2)).data
    assert np.all(composed <= bound)
