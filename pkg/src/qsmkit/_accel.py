"""Voxelwise hot kernels, JIT-compiled with numba when available.

Every kernel has a pure-numpy implementation (``*_numpy``). The module-level
names point at the numba build unless ``QSM_DISABLE_NUMBA=1`` is set or numba
cannot be imported, in which case they fall back to numpy. Kernels are
sequential on purpose: output must be bit-deterministic for fixed input.
"""

import os

import numpy as np

_env = os.environ.get("QSM_DISABLE_NUMBA", "").strip()
NUMBA_DISABLED = _env not in ("", "0")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via QSM_DISABLE_NUMBA")
    from numba import njit

    USING_NUMBA = True
except ImportError:
    njit = None
    USING_NUMBA = False

# shape kind codes shared with simulate.py
KIND_SPHERE = 0
KIND_CYLINDER = 1
KIND_CUBOID = 2


def weighted_sin_residual_numpy(field, phase, w2):
    """w2 * sin(field - phase), elementwise."""
    return w2 * np.sin(field - phase)


def trig_cost_numpy(field, phase, w2):
    """sum of 2 * w2 * (1 - cos(field - phase))."""
    return float(np.sum(2.0 * w2 * (1.0 - np.cos(field - phase))))


def residual_and_cost_numpy(field, phase, w2):
    """One pass over the residual angle: returns (w2*sin(d), sum 2*w2*(1-cos(d)))."""
    d = field - phase
    return w2 * np.sin(d), float(np.sum(2.0 * w2 * (1.0 - np.cos(d))))


def rasterize_shapes_numpy(xs, ys, zs, kinds, centers, sizes, axes, chis, background):
    """Fill a volume from shape primitives; the last shape containing a voxel wins."""
    out = np.full((xs.size, ys.size, zs.size), background, dtype=np.float64)
    px = xs[:, None, None]
    py = ys[None, :, None]
    pz = zs[None, None, :]
    for s in range(kinds.shape[0]):
        cx, cy, cz = centers[s]
        if kinds[s] == KIND_SPHERE:
            inside = (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2 <= sizes[s, 0] ** 2
        elif kinds[s] == KIND_CYLINDER:
            d = [px - cx, py - cy, pz - cz]
            a = axes[s]
            along = d[a]
            radial2 = sum(d[i] ** 2 for i in range(3) if i != a)
            inside = (np.abs(along) <= sizes[s, 1]) & (radial2 <= sizes[s, 0] ** 2)
        else:
            inside = (
                (np.abs(px - cx) <= sizes[s, 0])
                & (np.abs(py - cy) <= sizes[s, 1])
                & (np.abs(pz - cz) <= sizes[s, 2])
            )
        out[inside] = chis[s]
    return out


if USING_NUMBA:

    @njit(cache=True)
    def weighted_sin_residual(field, phase, w2):
        out = np.empty_like(field)
        f = field.ravel()
        p = phase.ravel()
        w = w2.ravel()
        o = out.ravel()
        for i in range(f.size):
            o[i] = w[i] * np.sin(f[i] - p[i])
        return out

    @njit(cache=True)
    def trig_cost(field, phase, w2):
        f = field.ravel()
        p = phase.ravel()
        w = w2.ravel()
        acc = 0.0
        for i in range(f.size):
            acc += 2.0 * w[i] * (1.0 - np.cos(f[i] - p[i]))
        return acc

    @njit(cache=True)
    def residual_and_cost(field, phase, w2):
        out = np.empty_like(field)
        f = field.ravel()
        p = phase.ravel()
        w = w2.ravel()
        o = out.ravel()
        acc = 0.0
        for i in range(f.size):
            d = f[i] - p[i]
            o[i] = w[i] * np.sin(d)
            acc += 2.0 * w[i] * (1.0 - np.cos(d))
        return out, acc

    @njit(cache=True)
    def _rasterize_shapes_jit(xs, ys, zs, kinds, centers, sizes, axes, chis, background):
        out = np.empty((xs.size, ys.size, zs.size), dtype=np.float64)
        n = kinds.shape[0]
        for i in range(xs.size):
            for j in range(ys.size):
                for k in range(zs.size):
                    value = background
                    # walk shapes back-to-front so the last containing shape wins
                    for s in range(n - 1, -1, -1):
                        dx = xs[i] - centers[s, 0]
                        dy = ys[j] - centers[s, 1]
                        dz = zs[k] - centers[s, 2]
                        if kinds[s] == KIND_SPHERE:
                            hit = dx * dx + dy * dy + dz * dz <= sizes[s, 0] * sizes[s, 0]
                        elif kinds[s] == KIND_CYLINDER:
                            if axes[s] == 0:
                                along, r2 = dx, dy * dy + dz * dz
                            elif axes[s] == 1:
                                along, r2 = dy, dx * dx + dz * dz
                            else:
                                along, r2 = dz, dx * dx + dy * dy
                            hit = abs(along) <= sizes[s, 1] and r2 <= sizes[s, 0] * sizes[s, 0]
                        else:
                            hit = (
                                abs(dx) <= sizes[s, 0]
                                and abs(dy) <= sizes[s, 1]
                                and abs(dz) <= sizes[s, 2]
                            )
                        if hit:
                            value = chis[s]
                            break
                    out[i, j, k] = value
        return out

    def rasterize_shapes(xs, ys, zs, kinds, centers, sizes, axes, chis, background):
        if kinds.shape[0] == 0:
            return np.full((xs.size, ys.size, zs.size), background, dtype=np.float64)
        return _rasterize_shapes_jit(xs, ys, zs, kinds, centers, sizes, axes, chis, background)

else:
    weighted_sin_residual = weighted_sin_residual_numpy
    trig_cost = trig_cost_numpy
    residual_and_cost = residual_and_cost_numpy
    rasterize_shapes = rasterize_shapes_numpy
