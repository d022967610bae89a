"""
Obstacle environments: unions of axis-aligned boxes inside a bounding cube.

The random-grid method dissects the cube into chunks; every chunk draws its own
lattice resolution, connection probability and strut thickness, connects
axis-adjacent lattice points at random and wraps each connection in a square
prism. Distances to the environment are signed (negative inside a box).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from topogen.intersect import triangles_hit_boxes
from topogen.mesh import TriangleMesh, box_mesh
from topogen.meshio import write_obj_arrays

logger = logging.getLogger(__name__)

CHUNK_ELEMENTS = 1 << 22  # points x boxes evaluated per distance batch


class RandomGridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    cube_side: float = Field(20.0, gt=0)
    chunks_per_axis: int = Field(5, ge=1)
    subchunk_side: float = Field(4.0, gt=0)
    axis_resolution_range: Tuple[int, int] = (2, 4)
    connection_probability_range: Tuple[float, float] = (0.15, 0.25)
    edge_thickness_range: Tuple[float, float] = (0.4, 0.6)

    @model_validator(mode="after")
    def _consistent(self) -> "RandomGridSpec":
        if not math.isclose(self.chunks_per_axis * self.subchunk_side, self.cube_side, rel_tol=1e-9):
            raise ValueError("chunks_per_axis * subchunk_side must equal cube_side")
        for name in ("axis_resolution_range", "connection_probability_range", "edge_thickness_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must satisfy min <= max")
        if self.axis_resolution_range[0] < 1:
            raise ValueError("axis resolutions must be positive")
        p_lo, p_hi = self.connection_probability_range
        if p_lo < 0 or p_hi > 1:
            raise ValueError("connection probabilities must lie in [0, 1]")
        if self.edge_thickness_range[0] <= 0:
            raise ValueError("edge thickness must be positive")
        return self


@dataclass(frozen=True, eq=False)
class Environment:
    box_min: np.ndarray
    box_max: np.ndarray
    cube_side: float = 20.0
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lo = np.asarray(self.box_min, dtype=np.float64).reshape(-1, 3)
        hi = np.asarray(self.box_max, dtype=np.float64).reshape(-1, 3)
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        for arr in (lo, hi, origin):
            arr.flags.writeable = False
        object.__setattr__(self, "box_min", lo)
        object.__setattr__(self, "box_max", hi)
        object.__setattr__(self, "origin", origin)
        if lo.shape != hi.shape:
            raise ValueError("box_min and box_max must have the same shape")
        if np.any(lo >= hi):
            raise ValueError("every box needs min < max componentwise")
        tol = 1e-9 * self.cube_side
        if np.any(lo < origin - tol) or np.any(hi > origin + self.cube_side + tol):
            raise ValueError("boxes must lie within the bounding cube")

    @classmethod
    def empty(cls, cube_side: float = 20.0) -> "Environment":
        return cls(np.empty((0, 3)), np.empty((0, 3)), cube_side, provenance={"method": "empty"})

    @property
    def box_count(self) -> int:
        return len(self.box_min)

    @property
    def centre(self) -> np.ndarray:
        return self.origin + 0.5 * self.cube_side


def _lattice_edges(axes: Sequence[np.ndarray], axis: int) -> Tuple[np.ndarray, np.ndarray]:
    starts = [ax[:-1] if a == axis else ax for a, ax in enumerate(axes)]
    ends = [ax[1:] if a == axis else ax for a, ax in enumerate(axes)]
    s = np.stack(np.meshgrid(*starts, indexing="ij"), axis=-1).reshape(-1, 3)
    e = np.stack(np.meshgrid(*ends, indexing="ij"), axis=-1).reshape(-1, 3)
    return s, e


def random_grid_environment(spec: RandomGridSpec, rng_seed: int) -> Environment:
    rng = np.random.default_rng(rng_seed & 0xFFFFFFFFFFFFFFFF)
    res_lo, res_hi = spec.axis_resolution_range
    lows, highs, chunks = [], [], []
    n = spec.chunks_per_axis
    for i, j, k in itertools.product(range(n), repeat=3):
        c0 = np.array([i, j, k], dtype=np.float64) * spec.subchunk_side
        res = rng.integers(res_lo, res_hi + 1, size=3)
        p = float(rng.uniform(*spec.connection_probability_range))
        t = float(rng.uniform(*spec.edge_thickness_range))
        axes = [np.linspace(c0[a], c0[a] + spec.subchunk_side, int(res[a])) for a in range(3)]
        for axis in range(3):
            if res[axis] < 2:
                continue
            s, e = _lattice_edges(axes, axis)
            keep = rng.random(len(s)) < p
            lows.append(s[keep] - t / 2)
            highs.append(e[keep] + t / 2)
        chunks.append({"index": [i, j, k], "resolution": res.tolist(), "probability": p, "thickness": t})

    lo = np.concatenate(lows) if lows else np.empty((0, 3))
    hi = np.concatenate(highs) if highs else np.empty((0, 3))
    lo = np.clip(lo, 0.0, spec.cube_side)
    hi = np.clip(hi, 0.0, spec.cube_side)
    logger.debug("random grid environment seed=%d boxes=%d", rng_seed, len(lo))
    return Environment(
        lo,
        hi,
        spec.cube_side,
        provenance={
            "method": "random_grid",
            "spec": spec.model_dump(mode="json"),
            "rng_seed": int(rng_seed),
            "chunks": chunks,
        },
    )


def _box_offsets(env: Environment, points: np.ndarray) -> np.ndarray:
    centre = 0.5 * (env.box_min + env.box_max)
    half = 0.5 * (env.box_max - env.box_min)
    return np.abs(points[:, None, :] - centre[None]) - half[None]


def _signed(q: np.ndarray) -> np.ndarray:
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def environment_distances(env: Environment, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.full(len(points), np.inf)
    if env.box_count == 0:
        return out
    step = max(1, CHUNK_ELEMENTS // env.box_count)
    for s in range(0, len(points), step):
        out[s:s + step] = _signed(_box_offsets(env, points[s:s + step])).min(axis=1)
    return out


def environment_distance(env: Environment, point: Sequence[float]) -> float:
    return float(environment_distances(env, np.asarray(point, dtype=np.float64))[0])


def environment_distance_gradient(env: Environment, points: np.ndarray) -> np.ndarray:
    """Unit gradient of the signed distance, taken from the nearest box."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    grad = np.zeros_like(points)
    if env.box_count == 0:
        return grad
    step = max(1, CHUNK_ELEMENTS // env.box_count)
    centre = 0.5 * (env.box_min + env.box_max)
    rows = np.arange(len(points))
    for s in range(0, len(points), step):
        p = points[s:s + step]
        q = _box_offsets(env, p)
        nearest = _signed(q).argmin(axis=1)
        qn = q[rows[: len(p)], nearest]
        side = np.where(p - centre[nearest] >= 0, 1.0, -1.0)
        outside = np.maximum(qn, 0.0)
        norm = np.linalg.norm(outside, axis=1, keepdims=True)
        inside_axis = np.eye(3)[qn.argmax(axis=1)]
        g = np.where(norm > 0, outside / np.where(norm > 0, norm, 1.0), inside_axis)
        grad[s:s + step] = g * side
    return grad


def boxes_near(env: Environment, lo: np.ndarray, hi: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Indices of boxes overlapping the region [lo - margin, hi + margin]."""
    if env.box_count == 0:
        return np.empty(0, dtype=np.int64)
    hit = np.all(env.box_min <= hi + margin, axis=1) & np.all(env.box_max >= lo - margin, axis=1)
    return np.flatnonzero(hit)


def environment_contact_faces(env: Environment, mesh: TriangleMesh) -> np.ndarray:
    """Per-face flag: the triangle touches a box or has a vertex inside one."""
    contact = np.zeros(mesh.face_count, dtype=bool)
    lo, hi = mesh.bounds
    near = boxes_near(env, lo, hi)
    if near.size == 0:
        return contact
    blo, bhi = env.box_min[near], env.box_max[near]
    v = mesh.vertices
    inside = (np.all(v[:, None, :] > blo[None], axis=2) & np.all(v[:, None, :] < bhi[None], axis=2)).any(axis=1)
    contact |= inside[mesh.faces].any(axis=1)
    tris = v[mesh.faces]
    tlo, thi = tris.min(axis=1), tris.max(axis=1)
    ti, bi = np.nonzero(
        np.all(tlo[:, None, :] <= bhi[None], axis=2) & np.all(thi[:, None, :] >= blo[None], axis=2)
    )
    if ti.size:
        contact[ti[triangles_hit_boxes(tris[ti], blo[bi], bhi[bi])]] = True
    return contact


def mesh_collides_environment(env: Environment, mesh: TriangleMesh) -> bool:
    return bool(environment_contact_faces(env, mesh).any())


def write_environment_obj(env: Environment, path: Union[str, Path]) -> None:
    unit = box_mesh((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    size = env.box_max - env.box_min
    verts = env.box_min[:, None, :] + unit.vertices[None] * size[:, None, :]
    faces = unit.faces[None] + 8 * np.arange(env.box_count)[:, None, None]
    write_obj_arrays(path, verts.reshape(-1, 3), faces.reshape(-1, 3))
