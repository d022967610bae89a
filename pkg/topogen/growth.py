"""
Scene setup and growth.

``place_seed`` centres, rotates and rescales a seed inside an environment,
re-drawing the placement when it collides with a box. ``grow`` then inflates
the surface along its vertex normals while a tangent-point descent step keeps
it spread out and a penalty step keeps it clear of the boxes. A step is kept
only if the surface stays embedded: no self-intersection, no contact with the
environment, no reversed face. Rejections damp the mobility of the vertices
they blame, so a stuck region slows down while the rest keeps growing.
Snapshots are taken as the area ratio crosses each growth fraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.sparse import coo_matrix, csr_matrix
from scipy.spatial import cKDTree
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from topogen.energy import (
    DEFAULT_EXPONENTS,
    check_exponents,
    tangent_point_energy,
    tangent_point_energy_and_gradient,
)
from topogen.environment import (
    Environment,
    environment_distance_gradient,
    environment_contact_faces,
    environment_distances,
    mesh_collides_environment,
)
from topogen.errors import (
    GrowthStalledError,
    MeshStructureError,
    PlacementError,
    SingularConfigurationError,
)
from topogen.intersect import self_intersecting_pairs
from topogen.mesh import TriangleMesh, euler_characteristic, mean_edge_length, surface_area, transform

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
CLEARANCE_NEIGHBOURS = 32


# ------------------------------------------------------------------ placement
class PlacementParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    global_area_target: float = Field(1.0, gt=0)
    uniform_scale_jitter: float = Field(0.0, ge=-0.25, le=0.25)
    anisotropic_scale_jitter: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    center_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @field_validator("rotation")
    @classmethod
    def _angles(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(not 0.0 <= a < TWO_PI for a in v):
            raise ValueError("rotation angles must lie in [0, 2*pi)")
        return v

    @field_validator("anisotropic_scale_jitter")
    @classmethod
    def _aniso(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(abs(a) > 0.5 for a in v):
            raise ValueError("anisotropic jitters must lie in [-0.5, 0.5]")
        return v


class PlacementConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    uniform_scale_range: float = Field(0.25, ge=0, le=0.25)
    anisotropic_scale_range: float = Field(0.5, ge=0, le=0.5)
    center_jitter: float = Field(2.0, ge=0, description="world units, used from the second attempt on")
    global_area_target: float = Field(1.0, gt=0)
    max_attempts: int = Field(64, ge=1)

    def draw(self, rng: np.random.Generator, attempt: int = 0) -> PlacementParams:
        rotation = rng.uniform(0.0, TWO_PI, 3)
        uniform = rng.uniform(-self.uniform_scale_range, self.uniform_scale_range)
        aniso = rng.uniform(-self.anisotropic_scale_range, self.anisotropic_scale_range, 3)
        offset = rng.uniform(-self.center_jitter, self.center_jitter, 3) * (attempt > 0)
        return PlacementParams(
            rotation=tuple(float(a) for a in rotation),
            global_area_target=self.global_area_target,
            uniform_scale_jitter=float(uniform),
            anisotropic_scale_jitter=tuple(float(a) for a in aniso),
            center_offset=tuple(float(a) for a in offset),
        )


class _Collision(Exception):
    pass


def apply_placement(seed: TriangleMesh, env: Environment, params: PlacementParams) -> TriangleMesh:
    lo, hi = seed.bounds
    mesh = seed.with_vertices(seed.vertices - 0.5 * (lo + hi))
    mesh = transform(mesh, rotation=params.rotation)
    mesh = transform(mesh, scale=math.sqrt(params.global_area_target / surface_area(mesh)))
    mesh = transform(mesh, scale=1.0 + params.uniform_scale_jitter)
    mesh = transform(mesh, scale=1.0 + np.asarray(params.anisotropic_scale_jitter))
    lo, hi = mesh.bounds
    target = env.centre + np.asarray(params.center_offset)
    return transform(mesh, translation=target - 0.5 * (lo + hi))


def inside_cube(env: Environment, mesh: TriangleMesh) -> bool:
    lo, hi = mesh.bounds
    return bool(np.all(lo > env.origin) and np.all(hi < env.origin + env.cube_side))


def find_placement(
    seed: TriangleMesh,
    env: Environment,
    params: Optional[PlacementParams] = None,
    rng: Optional[np.random.Generator] = None,
    config: Optional[PlacementConfig] = None,
) -> Tuple[TriangleMesh, PlacementParams]:
    """
    Place ``seed`` with ``params`` (or a fresh draw). On collision with the
    environment, retry with new draws from ``rng`` up to ``max_attempts``.
    Returns the placed mesh and the parameters that produced it.
    """
    config = config or PlacementConfig()
    if params is None and rng is None:
        raise ValueError("placement needs either params or an rng to draw them")
    attempts = config.max_attempts if rng is not None else 1

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(attempts),
            retry=retry_if_exception_type(_Collision),
            before_sleep=before_sleep_log(logger, logging.DEBUG),
            reraise=True,
        ):
            with attempt:
                k = attempt.retry_state.attempt_number - 1
                used = params if (k == 0 and params is not None) else config.draw(rng, k)
                placed = apply_placement(seed, env, used)
                if not inside_cube(env, placed) or mesh_collides_environment(env, placed):
                    raise _Collision(k)
    except _Collision:
        raise PlacementError(f"no collision-free placement after {attempts} attempts") from None
    return placed, used


def place_seed(
    seed: TriangleMesh,
    env: Environment,
    params: Optional[PlacementParams] = None,
    rng: Optional[np.random.Generator] = None,
    config: Optional[PlacementConfig] = None,
) -> TriangleMesh:
    return find_placement(seed, env, params, rng, config)[0]


# --------------------------------------------------------------------- growth
class GrowthConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    target_area_range: Tuple[float, float] = (3.0, 5.0)
    target_area_multiplier: Optional[float] = Field(None, ge=1.0, description="fixed target; overrides the range")
    inflation_step: float = Field(0.05, ge=0, description="fraction of the mean edge length")
    descent_step: float = Field(0.05, ge=0, description="fraction of the mean edge length")
    exponents: Tuple[float, float] = DEFAULT_EXPONENTS
    cutoff_edge_lengths: Optional[float] = Field(10.0, gt=0)
    environment_penalty_weight: float = Field(1.0, gt=0)
    environment_margin: float = Field(0.05, gt=0)
    max_iterations: int = Field(400, ge=1)
    max_skipped_iterations: int = Field(20, ge=1, description="consecutive iterations with no accepted step")
    snapshot_fractions: Tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    min_step_scale: float = Field(1.0 / 64, gt=0, le=1)
    line_search_halvings: int = Field(8, ge=0)
    armijo: float = Field(1e-4, gt=0, lt=1)
    clearance_fraction: float = Field(0.25, gt=0, le=1)
    min_clearance_edge_lengths: float = Field(0.5, ge=0, description="gap inflation never closes")
    tangential_smoothing: float = Field(0.1, ge=0, le=1)
    mobility_damping: float = Field(0.5, gt=0, lt=1)
    mobility_recovery: float = Field(1.25, ge=1)
    min_mobility: float = Field(1.0 / 256, gt=0, le=1)
    smooth_gradient: bool = False
    overshoot_tolerance: float = Field(0.01, ge=0)

    @field_validator("exponents")
    @classmethod
    def _exponents(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        return check_exponents(v)

    @field_validator("snapshot_fractions")
    @classmethod
    def _fractions(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v or list(v) != sorted(v) or v[0] < 0 or v[-1] > 1:
            raise ValueError("snapshot fractions must be sorted within [0, 1]")
        return v

    @model_validator(mode="after")
    def _range(self) -> "GrowthConfig":
        lo, hi = self.target_area_range
        if lo < 1 or lo > hi:
            raise ValueError("target_area_range must satisfy 1 <= min <= max")
        return self

    def target(self, rng: np.random.Generator) -> float:
        if self.target_area_multiplier is not None:
            return float(self.target_area_multiplier)
        return float(rng.uniform(*self.target_area_range))


@dataclass(frozen=True)
class GrowthSnapshot:
    mesh: TriangleMesh
    complexity_level: int
    area_ratio: float
    iteration: int
    chi: int
    target_area_multiplier: float = 1.0


@dataclass(frozen=True)
class DescentResult:
    mesh: TriangleMesh
    energy_before: float
    energy_after: float
    step: float


def vertex_adjacency(mesh: TriangleMesh) -> csr_matrix:
    e = mesh.edges
    n = mesh.vertex_count
    return coo_matrix(
        (np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)
    ).tocsr()


def _smooth(mesh: TriangleMesh, field: np.ndarray) -> np.ndarray:
    """One Jacobi sweep of Laplacian smoothing over the edge graph."""
    adj = vertex_adjacency(mesh)
    deg = np.asarray(adj.sum(axis=1)).reshape(-1, 1)
    return 0.5 * field + 0.5 * (adj @ field) / deg


def tangential_relaxation(mesh: TriangleMesh, adj: Optional[csr_matrix] = None) -> np.ndarray:
    """Umbrella displacement toward the neighbour average, normal component removed."""
    adj = vertex_adjacency(mesh) if adj is None else adj
    deg = np.asarray(adj.sum(axis=1)).reshape(-1, 1)
    lap = (adj @ mesh.vertices) / deg - mesh.vertices
    n = mesh.vertex_normals
    return lap - np.einsum("vd,vd->v", lap, n)[:, None] * n


def repulsive_descent_step(
    mesh: TriangleMesh,
    step: float,
    exponents=DEFAULT_EXPONENTS,
    cutoff: Optional[float] = None,
    armijo: float = 1e-4,
    halvings: int = 8,
    smooth: bool = False,
    weights: Optional[np.ndarray] = None,
) -> DescentResult:
    """
    One backtracking descent step on the tangent-point energy. ``step`` is the
    largest vertex displacement tried; it is halved until the Armijo condition
    holds, and the mesh is returned unchanged if it never does. ``weights``
    scales the step per vertex (0 pins a vertex).
    """
    e0, grad = tangent_point_energy_and_gradient(mesh, exponents, cutoff)
    if smooth:
        grad = _smooth(mesh, grad)
    move = grad if weights is None else grad * np.asarray(weights, dtype=np.float64)[:, None]
    gmax = float(np.linalg.norm(move, axis=1).max()) if len(move) else 0.0
    if step <= 0 or gmax == 0.0:
        return DescentResult(mesh, e0, e0, 0.0)
    direction = -move / gmax
    slope = float(np.sum(grad * direction))
    t = step
    for _ in range(halvings + 1):
        candidate = mesh.with_vertices(mesh.vertices + t * direction)
        try:
            e1 = tangent_point_energy(candidate, exponents, cutoff)
        except SingularConfigurationError:
            e1 = math.inf
        if e1 <= e0 + armijo * t * slope:
            return DescentResult(candidate, e0, e1, t)
        t *= 0.5
    return DescentResult(mesh, e0, e0, 0.0)


def free_distance(mesh: TriangleMesh, env: Optional[Environment] = None) -> np.ndarray:
    """
    Per-vertex room to move along the vertex normal: distance to the nearest
    non-incident face centroid inside a forward cone, capped by the distance to
    the environment.
    """
    v = mesh.vertices
    n = mesh.vertex_normals
    k = min(CLEARANCE_NEIGHBOURS, mesh.face_count)
    _, idx = cKDTree(mesh.face_centroids).query(v, k=k)
    idx = idx.reshape(len(v), k)
    rel = mesh.face_centroids[idx] - v[:, None, :]
    dist = np.linalg.norm(rel, axis=-1)
    ahead = np.einsum("vkd,vd->vk", rel, n) > 0.5 * dist
    incident = (mesh.faces[idx] == np.arange(len(v))[:, None, None]).any(axis=-1)
    free = np.where(ahead & ~incident, dist, np.inf).min(axis=1)
    if env is not None and env.box_count:
        free = np.minimum(free, np.maximum(environment_distances(env, v), 0.0))
    return free


def rejection_offenders(
    env: Environment, before: TriangleMesh, after: TriangleMesh
) -> Tuple[Optional[str], np.ndarray]:
    """
    The first embedding check ``after`` fails and a per-vertex mask of the
    vertices responsible: corners of reversed, box-touching or intersecting
    faces, or vertices outside the cube. ``(None, all False)`` when it passes.
    """
    faces = after.faces

    def corners(face_mask: np.ndarray) -> np.ndarray:
        out = np.zeros(after.vertex_count, dtype=bool)
        out[faces[face_mask].ravel()] = True
        return out

    flipped = np.einsum("fd,fd->f", before.face_normals, after.face_normals) <= 0
    if flipped.any():
        return "face_flip", corners(flipped)
    v = after.vertices
    outside = np.any((v <= env.origin) | (v >= env.origin + env.cube_side), axis=1)
    if outside.any():
        return "bounds", outside
    contact = environment_contact_faces(env, after)
    if contact.any():
        return "environment", corners(contact)
    pairs = self_intersecting_pairs(after)
    if len(pairs):
        hit = np.zeros(after.face_count, dtype=bool)
        hit[pairs.ravel()] = True
        return "self_intersection", corners(hit)
    return None, np.zeros(after.vertex_count, dtype=bool)


def _penalty(
    env: Environment, vertices: np.ndarray, margin: float, weight: float, factor: np.ndarray
) -> np.ndarray:
    if env.box_count == 0:
        return vertices
    d = environment_distances(env, vertices)
    near = d < margin
    if not near.any():
        return vertices
    out = vertices.copy()
    push = weight * (margin - d[near]) * factor[near]
    out[near] += push[:, None] * environment_distance_gradient(env, vertices[near])
    return out


def grow(
    seed: TriangleMesh,
    env: Environment,
    config: GrowthConfig,
    rng_seed: int,
    trace: Optional[List[Dict[str, Any]]] = None,
) -> List[GrowthSnapshot]:
    """
    Grow a placed seed until its area reaches the target multiple of the
    starting area. ``trace``, when given, receives one row per attempted step.

    Every vertex carries a mobility in [min_mobility, 1] that scales all of
    its motion. A rejected step damps the vertices it blames (and their
    neighbours), so the next attempt and the next iteration propose something
    different; accepted steps let mobility recover. Growth stops early after
    ``max_skipped_iterations`` consecutive iterations without an accepted step.
    """
    rng = np.random.default_rng(int(rng_seed) & 0xFFFFFFFFFFFFFFFF)
    target = config.target(rng)
    chi0 = euler_characteristic(seed)
    if mesh_collides_environment(env, seed):
        raise PlacementError("placed seed intersects the environment")

    if target <= 1.0 + 1e-12:
        return [GrowthSnapshot(seed, 0, 1.0, 0, chi0, target)]

    a0 = surface_area(seed)
    thresholds = 1.0 + np.asarray(config.snapshot_fractions) * (target - 1.0)
    cutoff_scale = config.cutoff_edge_lengths
    adj = vertex_adjacency(seed)
    mobility = np.ones(seed.vertex_count)
    snapshots: List[GrowthSnapshot] = []
    mesh = seed
    ratio = 1.0
    skipped = 0

    def record(iteration: int) -> None:
        while len(snapshots) < len(thresholds) and ratio >= thresholds[len(snapshots)] - 1e-12:
            chi = euler_characteristic(mesh)
            if chi != chi0:
                raise MeshStructureError(f"Euler characteristic changed from {chi0} to {chi}")
            snapshots.append(GrowthSnapshot(mesh, len(snapshots), ratio, iteration, chi, target))
            logger.debug("snapshot level=%d ratio=%.4f iteration=%d", len(snapshots) - 1, ratio, iteration)

    record(0)
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        if len(snapshots) == len(thresholds):
            break
        h = mean_edge_length(mesh)
        cutoff = None if cutoff_scale is None else cutoff_scale * h
        room = np.maximum(free_distance(mesh, env) - config.min_clearance_edge_lengths * h, 0.0)
        amount = np.minimum(config.inflation_step * h, config.clearance_fraction * room)
        proposal = amount[:, None] * mesh.vertex_normals
        proposal += config.tangential_smoothing * tangential_relaxation(mesh, adj)
        next_threshold = thresholds[len(snapshots)]

        scale = 1.0
        accepted = False
        while scale >= config.min_step_scale:
            factor = scale * mobility
            step = repulsive_descent_step(
                mesh.with_vertices(mesh.vertices + factor[:, None] * proposal),
                scale * config.descent_step * h,
                config.exponents,
                cutoff,
                config.armijo,
                config.line_search_halvings,
                config.smooth_gradient,
                mobility,
            )
            candidate = step.mesh.with_vertices(
                _penalty(env, step.mesh.vertices, config.environment_margin, config.environment_penalty_weight, factor)
            )
            reason, offenders = rejection_offenders(env, mesh, candidate)
            new_ratio = surface_area(candidate) / a0
            if reason is None and new_ratio > next_threshold * (1.0 + config.overshoot_tolerance):
                if scale / 2 >= config.min_step_scale:
                    reason = "overshoot"
            if trace is not None:
                trace.append(
                    {
                        "iteration": iteration,
                        "step_scale": scale,
                        "energy": step.energy_after,
                        "area_ratio": new_ratio,
                        "accepted": reason is None,
                        "reason": reason or "",
                        "offenders": int(offenders.sum()),
                    }
                )
            if reason is None:
                mesh, ratio, accepted = candidate, new_ratio, True
                break
            if offenders.any():
                blamed = offenders | (adj @ offenders.astype(np.float64) > 0)
                mobility[blamed] = np.maximum(mobility[blamed] * config.mobility_damping, config.min_mobility)
            scale *= 0.5

        if accepted:
            mobility = np.minimum(mobility * config.mobility_recovery, 1.0)
            skipped = 0
            record(iteration)
            continue
        skipped += 1
        logger.debug("iteration %d skipped at step floor", iteration)
        if skipped >= config.max_skipped_iterations:
            logger.info("no accepted step in %d iterations; stopping at ratio %.3f", skipped, ratio)
            break

    stall_level = 1 if len(thresholds) > 1 else 0
    if len(snapshots) <= stall_level:
        raise GrowthStalledError(ratio, iteration)
    if len(snapshots) < len(thresholds):
        logger.info(
            "growth stopped at ratio %.3f of target %.3f with %d/%d snapshots",
            ratio, target, len(snapshots), len(thresholds),
        )
    return snapshots


TRACE_COLUMNS = ["iteration", "step_scale", "energy", "area_ratio", "accepted", "reason", "offenders"]


def write_growth_trace(trace: List[Dict[str, Any]], path: Union[str, Path]) -> None:
    pd.DataFrame(trace, columns=TRACE_COLUMNS).to_csv(path, index=False)
