"""
Solid voxelization, noise octaves, smoothing, point sampling, slices and the
voxel/point/slice file formats.

Occupancy arrays are indexed [z, y, x], so a C-order ravel is x-fastest.
World coordinates are (x, y, z): voxel (z, y, x) covers
origin + voxel_size * ([x, y, z] + [0, 1)).
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.ndimage import correlate1d

from topogen.errors import MeshStructureError, VoxelizationError
from topogen.mesh import TriangleMesh, euler_characteristic
from topogen.noise import perlin_volume

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

VOXEL_MAGIC = b"TGV1"
VOXEL_HEADER = struct.Struct("<4sIQ")
GRAZE_EPS = 1e-9
JITTER = np.array([[0.0, 0.0], [3.1e-4, 1.7e-4], [-2.3e-4, 4.1e-4], [5.3e-4, -3.7e-4], [-4.7e-4, -2.9e-4]])


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    occupancy: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    voxel_size: float = 1.0

    def __post_init__(self) -> None:
        occ = np.ascontiguousarray(self.occupancy, dtype=bool)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise ValueError(f"occupancy must be a cube, got shape {occ.shape}")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        occ.flags.writeable = False
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def resolution(self) -> int:
        return self.occupancy.shape[0]

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    def with_occupancy(self, occupancy: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(occupancy, self.origin, self.voxel_size)


class NoiseOctaveSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scale: float = Field(gt=0)
    threshold: float
    mode: Literal["add", "subtract"] = "add"

    @field_validator("threshold")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("threshold must be finite")
        return v


DEFAULT_OCTAVES = (
    NoiseOctaveSpec(scale=4, threshold=0.5, mode="add"),
    NoiseOctaveSpec(scale=8, threshold=0.55, mode="add"),
    NoiseOctaveSpec(scale=16, threshold=0.55, mode="subtract"),
)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)

    def voxel_indices(self, grid: VoxelGrid) -> np.ndarray:
        """(count, 3) [z, y, x] index of the voxel holding each point."""
        ijk = np.floor((self.points - grid.origin) / grid.voxel_size).astype(np.int64)
        return ijk[:, ::-1]

    def inside(self, grid: VoxelGrid) -> bool:
        idx = self.voxel_indices(grid)
        n = grid.resolution
        if np.any(idx < 0) or np.any(idx >= n):
            return False
        return bool(grid.occupancy[idx[:, 0], idx[:, 1], idx[:, 2]].all())


# -------------------------------------------------------------- voxelization
def grid_frame(mesh: TriangleMesh, resolution: int, pad: int = 2) -> Tuple[np.ndarray, float]:
    """Origin and voxel size that centre the mesh with ``pad`` empty voxels on the longest axis."""
    if resolution - 2 * pad < 1:
        raise ValueError(f"resolution {resolution} leaves no room inside a {pad}-voxel pad")
    lo, hi = mesh.bounds
    extent = float((hi - lo).max())
    if extent <= 0:
        raise VoxelizationError("mesh has zero extent")
    size = extent / (resolution - 2 * pad)
    origin = 0.5 * (lo + hi) - 0.5 * resolution * size
    return origin, size


def _ray_hits(tri: np.ndarray, n: int, offset: np.ndarray, rows: Optional[np.ndarray] = None):
    """
    Crossings of +x rays through yz voxel centres (shifted by ``offset``) with
    triangles given in grid units. Returns (k, j, x) of clean crossings and the
    (k, j) rows of grazing ones, which pass within GRAZE_EPS (barycentric) of a
    triangle edge or vertex.
    """
    y = tri[:, :, 1] - offset[0]
    z = tri[:, :, 2] - offset[1]
    j0 = np.maximum(np.ceil(y.min(axis=1) - 0.5), 0).astype(np.int64)
    j1 = np.minimum(np.floor(y.max(axis=1) - 0.5), n - 1).astype(np.int64)
    k0 = np.maximum(np.ceil(z.min(axis=1) - 0.5), 0).astype(np.int64)
    k1 = np.minimum(np.floor(z.max(axis=1) - 0.5), n - 1).astype(np.int64)
    nj = np.maximum(j1 - j0 + 1, 0)
    nk = np.maximum(k1 - k0 + 1, 0)
    counts = nj * nk
    t = np.repeat(np.arange(len(tri)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    j = j0[t] + local // np.maximum(nk[t], 1)
    k = k0[t] + local % np.maximum(nk[t], 1)
    if rows is not None:
        keep = rows[k, j]
        t, j, k = t[keep], j[keep], k[keep]

    py, pz = j + 0.5, k + 0.5
    ay, by, cy = y[t, 0], y[t, 1], y[t, 2]
    az, bz, cz = z[t, 0], z[t, 1], z[t, 2]
    det = (by - ay) * (cz - az) - (cy - ay) * (bz - az)
    flat = np.abs(det) <= GRAZE_EPS
    det = np.where(flat, 1.0, det)
    w1 = ((py - ay) * (cz - az) - (cy - ay) * (pz - az)) / det
    w2 = ((by - ay) * (pz - az) - (py - ay) * (bz - az)) / det
    w0 = 1.0 - w1 - w2
    w = np.stack([w0, w1, w2], axis=1)
    hit = ~flat & np.all(w > GRAZE_EPS, axis=1)
    grazing = ~flat & ~hit & np.all(w >= -GRAZE_EPS, axis=1)
    x = np.einsum("hk,hk->h", w, tri[t, :, 0])
    return k[hit], j[hit], x[hit], k[grazing], j[grazing]


def voxelize_solid(
    mesh: TriangleMesh,
    resolution: int,
    pad: int = 2,
    direction: int = 1,
    frame: Optional[Tuple[Sequence[float], float]] = None,
) -> VoxelGrid:
    """
    Occupied iff the voxel centre lies inside the closed mesh, by parity of
    crossings along x rays. Rows whose ray grazes an edge or vertex are
    re-cast with a small yz jitter.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    try:
        euler_characteristic(mesh)
    except MeshStructureError as exc:
        raise VoxelizationError(f"mesh is not closed: {exc}") from exc

    n = int(resolution)
    if frame is None:
        origin, size = grid_frame(mesh, n, pad)
    else:
        origin, size = np.asarray(frame[0], dtype=np.float64), float(frame[1])
    lo, hi = mesh.bounds
    if np.any(lo < origin) or np.any(hi > origin + n * size):
        raise VoxelizationError("mesh exceeds the grid bounds")

    tri = (mesh.vertices[mesh.faces] - origin) / size
    toggles = np.zeros((n, n, n + 1), dtype=np.int64)  # [z, y, x]
    pending = None
    for attempt, offset in enumerate(JITTER):
        k, j, x, gk, gj = _ray_hits(tri, n, offset, pending)
        bad = np.zeros((n, n), dtype=bool)
        bad[gk, gj] = True
        if attempt == len(JITTER) - 1:
            bad[:] = False
        good = ~bad[k, j]
        k, j, x = k[good], j[good], x[good]
        if direction > 0:
            i = np.clip(np.ceil(x - 0.5), 0, n).astype(np.int64)
        else:
            i = np.clip(np.ceil(x - 0.5) - 1, -1, n - 1).astype(np.int64) + 1
        np.add.at(toggles, (k, j, i), 1)
        if not bad.any():
            break
        logger.debug("re-casting %d grazing rows", int(bad.sum()))
        pending = bad

    if direction > 0:
        occ = (np.cumsum(toggles, axis=2)[:, :, :n] % 2).astype(bool)
    else:
        occ = (np.cumsum(toggles[:, :, ::-1], axis=2)[:, :, ::-1][:, :, 1:] % 2).astype(bool)
    return VoxelGrid(occ, origin, size)


# ------------------------------------------------------------ noise, smoothing
def octave_seed(rng_seed: int, octave: int) -> int:
    return int(np.random.SeedSequence([int(rng_seed) & 0xFFFFFFFFFFFFFFFF, octave]).generate_state(1, np.uint64)[0])


def apply_noise_octaves(
    grid: VoxelGrid,
    octaves: Sequence[NoiseOctaveSpec] = DEFAULT_OCTAVES,
    rng_seed: int = 0,
) -> VoxelGrid:
    occ = grid.occupancy.copy()
    for i, octave in enumerate(octaves):
        mask = perlin_volume(occ.shape, octave.scale, octave_seed(rng_seed, i)) >= octave.threshold
        if octave.mode == "add":
            occ |= mask
        else:
            occ &= ~mask
    return grid.with_occupancy(occ)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_smooth_binarize(grid: VoxelGrid, sigma: float = 0.25) -> VoxelGrid:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return grid.with_occupancy(grid.occupancy.copy())
    w = gaussian_kernel(sigma)
    field = grid.occupancy.astype(np.float64)
    for axis in range(3):
        field = correlate1d(field, w, axis=axis, mode="nearest")
    return grid.with_occupancy(field >= 0.5 - 1e-12)


# ------------------------------------------------------------ points, slices
def sample_point_cloud(grid: VoxelGrid, count: int = 8192, rng_seed: int = 0) -> PointCloud:
    occupied = np.argwhere(grid.occupancy)
    if len(occupied) == 0:
        raise VoxelizationError("cannot sample points from an empty grid")
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(int(rng_seed) & 0xFFFFFFFFFFFFFFFF)
    pick = occupied[rng.integers(len(occupied), size=count)][:, ::-1]  # -> x, y, z
    jitter = np.minimum(rng.random((count, 3)), 1.0 - 1e-9)
    cloud = PointCloud(grid.origin + (pick + jitter) * grid.voxel_size)
    if not cloud.inside(grid):
        raise VoxelizationError("sampled point fell outside the occupied voxels")
    return cloud


def sample_surface_points(mesh: TriangleMesh, count: int = 4096, rng_seed: int = 0) -> np.ndarray:
    """Area-weighted uniform samples on the mesh surface."""
    rng = np.random.default_rng(int(rng_seed) & 0xFFFFFFFFFFFFFFFF)
    p = mesh.face_areas / mesh.face_areas.sum()
    faces = rng.choice(mesh.face_count, size=count, p=p)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    tri = mesh.vertices[mesh.faces[faces]]
    return (
        (1 - r1)[:, None] * tri[:, 0]
        + (r1 * (1 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )


def extract_slice(grid: VoxelGrid, axis: str, index: int) -> np.ndarray:
    axes = {"z": 0, "y": 1, "x": 2}
    if axis not in axes:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if not 0 <= index < grid.resolution:
        raise ValueError(f"slice index {index} outside [0, {grid.resolution})")
    return np.take(grid.occupancy, index, axis=axes[axis]).copy()


# ----------------------------------------------------------------------- I/O
def encode_voxels(grid: VoxelGrid) -> bytes:
    payload = np.packbits(grid.occupancy.ravel(), bitorder="little").tobytes()
    return VOXEL_HEADER.pack(VOXEL_MAGIC, grid.resolution, len(payload)) + payload


def write_voxels(grid: VoxelGrid, path: PathLike) -> None:
    Path(path).write_bytes(encode_voxels(grid))


def read_voxels(path: PathLike, origin: Sequence[float] = (0.0, 0.0, 0.0), voxel_size: float = 1.0) -> VoxelGrid:
    data = Path(path).read_bytes()
    if len(data) < VOXEL_HEADER.size:
        raise ValueError(f"{path}: truncated voxel header")
    magic, n, length = VOXEL_HEADER.unpack_from(data)
    if magic != VOXEL_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if length != (n**3 + 7) // 8 or len(data) != VOXEL_HEADER.size + length:
        raise ValueError(f"{path}: payload length does not match resolution {n}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=VOXEL_HEADER.size), bitorder="little")
    return VoxelGrid(bits[: n**3].reshape(n, n, n).astype(bool), origin, voxel_size)


def write_xyz(points: np.ndarray, path: PathLike) -> None:
    np.savetxt(path, np.asarray(points).reshape(-1, 3), fmt="%.6f")


def read_xyz(path: PathLike) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def write_pgm(image: np.ndarray, path: PathLike) -> None:
    Image.fromarray(np.where(image, 255, 0).astype(np.uint8), mode="L").save(path, format="PPM")


def read_pgm(path: PathLike) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img) > 127
