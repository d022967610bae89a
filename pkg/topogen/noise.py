"""
Vectorised 3D gradient (improved Perlin) noise with a seeded permutation table.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

SLAB_VOXELS = 1 << 21


def fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6 - 15) + 10)


def lerp(t: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a + t * (b - a)


def grad(h: np.ndarray, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    h = h & 15
    u = np.where(h < 8, x, y)
    v = np.where(h < 4, y, np.where((h == 12) | (h == 14), x, z))
    return np.where(h & 1, -u, u) + np.where(h & 2, -v, v)


class PerlinNoise:
    """Gradient noise in roughly [-1, 1], periodic with period 256 on each axis."""

    def __init__(self, rng_seed: int):
        perm = np.random.default_rng(int(rng_seed) & 0xFFFFFFFFFFFFFFFF).permutation(256)
        self.perm = np.concatenate([perm, perm]).astype(np.int64)

    def __call__(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        p = self.perm
        fx, fy, fz = np.floor(x), np.floor(y), np.floor(z)
        X = fx.astype(np.int64) & 255
        Y = fy.astype(np.int64) & 255
        Z = fz.astype(np.int64) & 255
        x, y, z = x - fx, y - fy, z - fz
        u, v, w = fade(x), fade(y), fade(z)

        A = p[X] + Y
        AA = p[A] + Z
        AB = p[A + 1] + Z
        B = p[X + 1] + Y
        BA = p[B] + Z
        BB = p[B + 1] + Z

        return lerp(
            w,
            lerp(
                v,
                lerp(u, grad(p[AA], x, y, z), grad(p[BA], x - 1, y, z)),
                lerp(u, grad(p[AB], x, y - 1, z), grad(p[BB], x - 1, y - 1, z)),
            ),
            lerp(
                v,
                lerp(u, grad(p[AA + 1], x, y, z - 1), grad(p[BA + 1], x - 1, y, z - 1)),
                lerp(u, grad(p[AB + 1], x, y - 1, z - 1), grad(p[BB + 1], x - 1, y - 1, z - 1)),
            ),
        )


def perlin_volume(shape: Tuple[int, int, int], scale: float, rng_seed: int) -> np.ndarray:
    """
    Noise normalised to [0, 1] at the voxel centres of a [z, y, x] volume.
    ``scale`` is the number of noise periods across the grid edge.
    """
    noise = PerlinNoise(rng_seed)
    nz, ny, nx = shape
    freq = float(scale) / max(shape)
    ys, xs = np.meshgrid((np.arange(ny) + 0.5) * freq, (np.arange(nx) + 0.5) * freq, indexing="ij")
    out = np.empty(shape, dtype=np.float64)
    slab = max(1, SLAB_VOXELS // max(ny * nx, 1))
    for z0 in range(0, nz, slab):
        zs = (np.arange(z0, min(z0 + slab, nz)) + 0.5) * freq
        Z = np.broadcast_to(zs[:, None, None], (len(zs), ny, nx))
        Y = np.broadcast_to(ys[None], Z.shape)
        X = np.broadcast_to(xs[None], Z.shape)
        out[z0:z0 + len(zs)] = noise(X, Y, Z)
    return np.clip((out + 1.0) * 0.5, 0.0, 1.0)
