"""Cellular (Worley F1) noise and normal displacement of a mesh surface."""

from __future__ import annotations

import itertools
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from topogen.errors import DisplacementError
from topogen.intersect import has_self_intersection
from topogen.mesh import TriangleMesh

logger = logging.getLogger(__name__)

_PRIMES = (np.uint64(0x8DA6B343), np.uint64(0xD8163841), np.uint64(0xCB1AB31F))
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class DisplacementConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    intensity: float = Field(0.5, ge=0)
    feature_size: float = Field(0.1, gt=0)
    max_attenuations: int = Field(8, ge=0)


def _feature_points(cells: np.ndarray, seed: int) -> np.ndarray:
    """One pseudo-random point in [0, 1)^3 per integer cell (splitmix64 finaliser)."""
    c = cells.astype(np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = (c[:, 0] * _PRIMES[0]) ^ (c[:, 1] * _PRIMES[1]) ^ (c[:, 2] * _PRIMES[2])
        h ^= np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        out = []
        for k in range(1, 4):
            z = h + np.uint64(k) * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
            out.append((z >> np.uint64(11)).astype(np.float64) / 2.0**53)
    return np.stack(out, axis=1)


def cellular_noise(points: np.ndarray, feature_size: float, rng_seed: int) -> np.ndarray:
    """Distance to the nearest feature point in units of feature_size, clipped to [0, 1]."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3) / feature_size
    base = np.floor(p)
    best = np.full(len(p), np.inf)
    for off in itertools.product((-1, 0, 1), repeat=3):
        cell = base + np.asarray(off, dtype=np.float64)
        fp = cell + _feature_points(cell, rng_seed)
        best = np.minimum(best, np.linalg.norm(p - fp, axis=1))
    return np.clip(best, 0.0, 1.0)


def cellular_displacement(
    mesh: TriangleMesh,
    intensity: float = 0.5,
    feature_size: float = 0.1,
    rng_seed: int = 0,
    max_attenuations: int = 8,
) -> TriangleMesh:
    """
    Move every vertex along its normal by intensity * (noise - 0.5). The
    intensity is halved until the surface stays embedded with no reversed face.
    """
    if intensity < 0 or feature_size <= 0:
        raise ValueError("intensity must be >= 0 and feature_size > 0")
    if intensity == 0:
        return mesh
    noise = cellular_noise(mesh.vertices, feature_size, rng_seed)
    offset = (noise - 0.5)[:, None] * mesh.vertex_normals
    for k in range(max_attenuations + 1):
        scale = intensity / 2**k
        candidate = mesh.with_vertices(mesh.vertices + scale * offset)
        flipped = np.einsum("fd,fd->f", mesh.face_normals, candidate.face_normals) <= 0
        if not flipped.any() and not has_self_intersection(candidate):
            if k:
                logger.debug("displacement attenuated to intensity %.4g", scale)
            return candidate
    raise DisplacementError(
        f"displacement self-intersects even at intensity {intensity / 2**max_attenuations:.4g}"
    )
