import numpy as np
import pytest

from qsmkit import (
    Acquisition,
    NdiConfig,
    NdiDivergenceError,
    NoiseSpec,
    Orientation,
    OrientationDataset,
    ScalarVolume,
    TkdConfig,
    VolumeGrid,
    dipole_kernel,
    forward_field,
    ndi_cost,
    ndi_gradient,
    ndi_reconstruct,
    nrmse,
    simulate_acquisition,
    tkd,
)
from qsmkit.core import voxel_coords

from conftest import EZ, ones_volume, random_volume, rot_x


def _random_dataset(g, rng, n_orient=2, phase_scale=0.5):
    entries = []
    for _ in range(n_orient):
        phase = ScalarVolume(g, phase_scale * rng.standard_normal(g.dims))
        mag = ScalarVolume(g, rng.uniform(0.2, 1.0, g.dims))
        b = rng.standard_normal(3)
        b /= np.linalg.norm(b)
        entries.append(Acquisition(phase, mag, Orientation(tuple(b))))
    return OrientationDataset(entries=tuple(entries), mask=ones_volume(g))


def _complex_residual_cost(chi, dataset):
    total = 0.0
    for e in dataset.entries:
        field = forward_field(chi, dipole_kernel(dataset.grid, e.orientation)).data
        residual = e.magnitude.data * (np.exp(1j * field) - np.exp(1j * e.phase.data))
        total += float(np.sum(np.abs(residual) ** 2))
    return total


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cost_equals_complex_residual_form(grid8, seed):
    rng = np.random.default_rng(seed)
    ds = _random_dataset(grid8, rng, n_orient=1 + seed % 3, phase_scale=np.pi)
    chi = random_volume(grid8, rng)
    trig = ndi_cost(chi, ds)
    direct = _complex_residual_cost(chi, ds)
    assert abs(trig - direct) <= 1e-10 * direct


def test_cost_zero_at_exact_solution(grid8):
    rng = np.random.default_rng(3)
    chi = random_volume(grid8, rng, scale=0.1)
    phase = forward_field(chi, dipole_kernel(grid8, EZ))
    ds = OrientationDataset(
        entries=(Acquisition(phase, ones_volume(grid8), EZ),), mask=ones_volume(grid8)
    )
    assert ndi_cost(chi, ds) < 1e-15


def test_cost_single_voxel_contributions(grid8):
    phase = np.zeros(grid8.dims)
    weight = np.zeros(grid8.dims)
    phase[2, 3, 4] = np.pi
    weight[2, 3, 4] = 1.0
    ds = OrientationDataset(
        entries=(Acquisition(ScalarVolume(grid8, phase), ScalarVolume(grid8, weight), EZ),),
        mask=ones_volume(grid8),
    )
    # residual pi at weight 1: 2*(1 - cos(pi)) = 4
    assert ndi_cost(ScalarVolume.zeros(grid8), ds) == pytest.approx(4.0, abs=1e-12)

    phase[2, 3, 4] = np.pi / 2
    weight[2, 3, 4] = 0.5
    ds = OrientationDataset(
        entries=(Acquisition(ScalarVolume(grid8, phase), ScalarVolume(grid8, weight), EZ),),
        mask=ones_volume(grid8),
    )
    # residual pi/2 at weight 0.5: 2*0.25*(1 - 0) = 0.5
    assert ndi_cost(ScalarVolume.zeros(grid8), ds) == pytest.approx(0.5, abs=1e-12)


def test_gradient_vanishes_at_noiseless_solution(grid8):
    rng = np.random.default_rng(4)
    chi = random_volume(grid8, rng, scale=0.1)
    phase = forward_field(chi, dipole_kernel(grid8, EZ))
    ds = OrientationDataset(
        entries=(Acquisition(phase, ones_volume(grid8), EZ),), mask=ones_volume(grid8)
    )
    grad = ndi_gradient(chi, ds, lam=0.0).data
    assert np.abs(grad).max() < 1e-9


def test_gradient_matches_finite_differences(grid8):
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(5):
        ds = _random_dataset(grid8, rng)
        chi0 = 0.05 * rng.standard_normal(grid8.dims)
        lam = float(rng.choice([0.0, 0.01]))
        grad = ndi_gradient(ScalarVolume(grid8, chi0), ds, lam).data
        gnorm = float(np.linalg.norm(grad))
        for _ in range(8):
            u = rng.standard_normal(grid8.dims)
            u /= np.linalg.norm(u)
            fp = ndi_cost(ScalarVolume(grid8, chi0 + h * u), ds) + lam * float(
                np.sum((chi0 + h * u) ** 2)
            )
            fm = ndi_cost(ScalarVolume(grid8, chi0 - h * u), ds) + lam * float(
                np.sum((chi0 - h * u) ** 2)
            )
            fd = (fp - fm) / (2 * h)
            assert abs(fd - float(np.sum(grad * u))) <= 1e-6 * gnorm


def test_gradient_pure_tikhonov_when_weights_vanish(grid8):
    rng = np.random.default_rng(6)
    chi = random_volume(grid8, rng)
    ds = OrientationDataset(
        entries=(Acquisition(random_volume(grid8, rng), ScalarVolume.zeros(grid8), EZ),),
        mask=ones_volume(grid8),
    )
    grad = ndi_gradient(chi, ds, lam=0.5).data
    assert np.array_equal(grad, chi.data)  # 2*0.5*chi exactly


def test_reconstruct_beats_tkd_on_noiseless_sphere():
    g = VolumeGrid((64, 64, 64))
    xs, ys, zs = voxel_coords(g)
    r2 = xs[:, None, None] ** 2 + ys[None, :, None] ** 2 + zs[None, None, :] ** 2
    chi = ScalarVolume(g, np.where(r2 <= 8.0**2, 0.1, 0.0))
    ds = simulate_acquisition(chi, ones_volume(g), [EZ], NoiseSpec(0.0, 0))
    res = ndi_reconstruct(ds, NdiConfig(step_size=1.0, lam=0.0, max_iters=400))
    ndi_err = nrmse(res.chi, chi, ds.mask)
    tkd_err = nrmse(tkd(ds.entries[0].phase, dipole_kernel(g, EZ), TkdConfig(0.2)), chi, ds.mask)
    assert ndi_err < tkd_err


def test_reconstruct_histories_and_descent(grid16):
    rng = np.random.default_rng(7)
    xs, ys, zs = voxel_coords(grid16)
    r2 = xs[:, None, None] ** 2 + ys[None, :, None] ** 2 + zs[None, None, :] ** 2
    chi = ScalarVolume(grid16, np.where(r2 <= 4.0**2, 0.1, 0.0))
    ds = simulate_acquisition(chi, ones_volume(grid16), [EZ, rot_x(30)], NoiseSpec(0.002, 8))
    res = ndi_reconstruct(
        ds, NdiConfig(step_size=1.0, lam=0.0, max_iters=50, record_history=True, reference=chi)
    )
    assert len(res.cost_history) == 50
    assert len(res.nrmse_history) == 50
    assert all(b <= a for a, b in zip(res.cost_history, res.cost_history[1:]))

    bare = ndi_reconstruct(ds, NdiConfig(step_size=1.0, lam=0.0, max_iters=5))
    assert bare.cost_history == []
    assert bare.nrmse_history is None


def test_reconstruct_orientation_permutation_bit_identical(grid16):
    rng = np.random.default_rng(9)
    ds = _random_dataset(grid16, rng, n_orient=3, phase_scale=0.3)
    swapped = OrientationDataset(
        entries=(ds.entries[2], ds.entries[0], ds.entries[1]), mask=ds.mask
    )
    a = ndi_reconstruct(ds, NdiConfig(max_iters=10, lam=0.001))
    b = ndi_reconstruct(swapped, NdiConfig(max_iters=10, lam=0.001))
    assert np.array_equal(a.chi.data, b.chi.data)


def test_lambda_shrinkage(grid16):
    xs, ys, zs = voxel_coords(grid16)
    r2 = xs[:, None, None] ** 2 + ys[None, :, None] ** 2 + zs[None, None, :] ** 2
    chi = ScalarVolume(grid16, np.where(r2 <= 4.0**2, 0.1, 0.0))
    ds = simulate_acquisition(chi, ones_volume(grid16), [EZ], NoiseSpec(0.005, 10))
    small = ndi_reconstruct(ds, NdiConfig(lam=0.001, max_iters=100)).chi.data
    large = ndi_reconstruct(ds, NdiConfig(lam=0.01, max_iters=100)).chi.data
    assert np.linalg.norm(large) <= np.linalg.norm(small)


def test_divergence_guard_names_iteration(grid8):
    rng = np.random.default_rng(11)
    ds = _random_dataset(grid8, rng, n_orient=1)
    with pytest.raises(NdiDivergenceError, match="iteration"):
        ndi_reconstruct(ds, NdiConfig(step_size=1e154, lam=0.5, max_iters=5))


def test_magnitude_normalization_is_global(grid8):
    # scaling all magnitudes by a constant leaves the reconstruction unchanged
    rng = np.random.default_rng(12)
    ds = _random_dataset(grid8, rng, n_orient=2, phase_scale=0.2)
    scaled = OrientationDataset(
        entries=tuple(
            Acquisition(e.phase, ScalarVolume(grid8, 7.5 * e.magnitude.data), e.orientation)
            for e in ds.entries
        ),
        mask=ds.mask,
    )
    a = ndi_reconstruct(ds, NdiConfig(max_iters=20)).chi.data
    b = ndi_reconstruct(scaled, NdiConfig(max_iters=20)).chi.data
    assert np.allclose(a, b, atol=1e-13)


def test_zero_magnitude_dataset_rejected(grid8):
    ds = OrientationDataset(
        entries=(Acquisition(ones_volume(grid8), ScalarVolume.zeros(grid8), EZ),),
        mask=ones_volume(grid8),
    )
    with pytest.raises(ValueError):
        ndi_reconstruct(ds, NdiConfig(max_iters=1))


def test_config_validation():
    with pytest.raises(ValueError):
        NdiConfig(step_size=0.0)
    with pytest.raises(ValueError):
        NdiConfig(lam=-0.1)
    with pytest.raises(ValueError):
        NdiConfig(max_iters=0)
