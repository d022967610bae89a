"""
Self-intersection testing: an axis-aligned BVH over triangle bounds, a dual-tree
traversal that yields candidate pairs, and vectorized separating-axis
predicates for triangle/triangle and triangle/box overlap.

Coordinates of every tested pair are shifted and scaled into a unit frame
before the predicate runs, so ``EPS`` is relative to the pair's size. A pair is
separated only if some axis shows a gap larger than ``EPS``; touching pairs
count as intersecting. Triangles that share a vertex index are adjacent and are
never tested against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from topogen.mesh import TriangleMesh

EPS = 1e-12
LEAF_SIZE = 8
BATCH = 65536


@dataclass(frozen=True)
class BVH:
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    order: np.ndarray

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def items(self, node: int) -> np.ndarray:
        return self.order[self.start[node]:self.stop[node]]


def build_bvh(item_lo: np.ndarray, item_hi: np.ndarray, leaf_size: int = LEAF_SIZE) -> BVH:
    """Median-split BVH over item bounding boxes, split along the widest centroid axis."""
    n = len(item_lo)
    order = np.arange(n)
    centres = 0.5 * (item_lo + item_hi)
    lo: List[np.ndarray] = []
    hi: List[np.ndarray] = []
    left: List[int] = []
    right: List[int] = []
    start: List[int] = []
    stop: List[int] = []

    def new_node(s: int, e: int) -> int:
        idx = order[s:e]
        lo.append(item_lo[idx].min(axis=0))
        hi.append(item_hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        stop.append(e)
        return len(lo) - 1

    stack = [new_node(0, n)] if n else []
    while stack:
        node = stack.pop()
        s, e = start[node], stop[node]
        if e - s <= leaf_size:
            continue
        idx = order[s:e]
        c = centres[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
        mid = (s + e) // 2
        left[node] = new_node(s, mid)
        right[node] = new_node(mid, e)
        stack.extend([left[node], right[node]])

    return BVH(
        lo=np.asarray(lo).reshape(-1, 3),
        hi=np.asarray(hi).reshape(-1, 3),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        start=np.asarray(start, dtype=np.int64),
        stop=np.asarray(stop, dtype=np.int64),
        order=order,
    )


def _overlap(bvh: BVH, a: int, b: int) -> bool:
    return bool(np.all(bvh.lo[a] <= bvh.hi[b]) and np.all(bvh.lo[b] <= bvh.hi[a]))


def self_candidate_pairs(bvh: BVH) -> np.ndarray:
    """(K, 2) item pairs i < j whose leaves overlap; pairs within one leaf included."""
    if len(bvh.lo) == 0:
        return np.empty((0, 2), dtype=np.int64)
    chunks: List[np.ndarray] = []
    stack: List[Tuple[int, int]] = [(0, 0)]
    while stack:
        a, b = stack.pop()
        if a == b:
            if bvh.is_leaf(a):
                items = bvh.items(a)
                i, j = np.triu_indices(len(items), k=1)
                chunks.append(np.stack([items[i], items[j]], axis=1))
            else:
                l, r = int(bvh.left[a]), int(bvh.right[a])
                stack.extend([(l, l), (r, r), (l, r)])
            continue
        if not _overlap(bvh, a, b):
            continue
        leaf_a, leaf_b = bvh.is_leaf(a), bvh.is_leaf(b)
        if leaf_a and leaf_b:
            ia, ib = bvh.items(a), bvh.items(b)
            chunks.append(np.stack(np.meshgrid(ia, ib, indexing="ij"), axis=-1).reshape(-1, 2))
        elif leaf_a or (not leaf_b and bvh.stop[b] - bvh.start[b] > bvh.stop[a] - bvh.start[a]):
            stack.extend([(a, int(bvh.left[b])), (a, int(bvh.right[b]))])
        else:
            stack.extend([(int(bvh.left[a]), b), (int(bvh.right[a]), b)])
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.concatenate(chunks)
    return np.sort(pairs, axis=1)


def _unit_frame(p: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    origin = p[:, :1, :]
    p = p - origin
    q = q - origin
    scale = np.maximum(np.abs(p).max(axis=(1, 2)), np.abs(q).max(axis=(1, 2)))
    scale = np.where(scale > 0, scale, 1.0)[:, None, None]
    return p / scale, q / scale


def triangles_intersect(p: np.ndarray, q: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Separating-axis test for triangle pairs p[k], q[k] of shape (n, 3, 3)."""
    p, q = _unit_frame(np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64))
    ep = np.roll(p, -1, axis=1) - p
    eq = np.roll(q, -1, axis=1) - q
    n_p = np.cross(ep[:, 0], ep[:, 1])
    n_q = np.cross(eq[:, 0], eq[:, 1])
    edge_edge = np.cross(ep[:, :, None, :], eq[:, None, :, :]).reshape(-1, 9, 3)
    in_plane_p = np.cross(n_p[:, None, :], ep)
    in_plane_q = np.cross(n_q[:, None, :], eq)
    axes = np.concatenate([n_p[:, None], n_q[:, None], edge_edge, in_plane_p, in_plane_q], axis=1)

    norm = np.linalg.norm(axes, axis=-1)
    valid = norm > eps
    axes = axes / np.where(valid, norm, 1.0)[..., None]

    pp = np.einsum("nav,nkv->nak", axes, p)
    qq = np.einsum("nav,nkv->nak", axes, q)
    gap = np.maximum(qq.min(-1) - pp.max(-1), pp.min(-1) - qq.max(-1))
    separated = valid & (gap > eps)
    return ~separated.any(axis=1)


def triangles_hit_boxes(tris: np.ndarray, lo: np.ndarray, hi: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Separating-axis test for triangles tris[k] against axis-aligned boxes [lo[k], hi[k]]."""
    tris = np.asarray(tris, dtype=np.float64)
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    v = tris - centre[:, None, :]
    scale = np.maximum(np.abs(v).max(axis=(1, 2)), half.max(axis=1))
    scale = np.where(scale > 0, scale, 1.0)
    v = v / scale[:, None, None]
    half = half / scale[:, None]

    edges = np.roll(v, -1, axis=1) - v
    normal = np.cross(edges[:, 0], edges[:, 1])
    basis = np.broadcast_to(np.eye(3), (len(v), 3, 3))
    crosses = np.cross(basis[:, :, None, :], edges[:, None, :, :]).reshape(-1, 9, 3)
    axes = np.concatenate([basis, normal[:, None], crosses], axis=1)

    proj = np.einsum("nav,nkv->nak", axes, v)
    radius = np.einsum("nav,nv->na", np.abs(axes), half)
    separated = (proj.min(-1) > radius + eps) | (proj.max(-1) < -radius - eps)
    return ~separated.any(axis=1)


def _non_adjacent(faces: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    fa = faces[pairs[:, 0]]
    fb = faces[pairs[:, 1]]
    return ~(fa[:, :, None] == fb[:, None, :]).any(axis=(1, 2))


def self_intersecting_pairs(mesh: TriangleMesh, first_only: bool = False) -> np.ndarray:
    tris = mesh.vertices[mesh.faces]
    lo, hi = tris.min(axis=1), tris.max(axis=1)
    pad = EPS * max(float(np.abs(mesh.vertices).max()), 1.0)
    pairs = self_candidate_pairs(build_bvh(lo - pad, hi + pad))
    if len(pairs) == 0:
        return pairs
    boxes = np.all(lo[pairs[:, 0]] <= hi[pairs[:, 1]] + pad, axis=1) & np.all(
        lo[pairs[:, 1]] <= hi[pairs[:, 0]] + pad, axis=1
    )
    pairs = pairs[boxes]
    pairs = pairs[_non_adjacent(mesh.faces, pairs)]

    hits: List[np.ndarray] = []
    for s in range(0, len(pairs), BATCH):
        chunk = pairs[s:s + BATCH]
        hit = chunk[triangles_intersect(tris[chunk[:, 0]], tris[chunk[:, 1]])]
        if len(hit):
            hits.append(hit)
            if first_only:
                break
    return np.concatenate(hits) if hits else np.empty((0, 2), dtype=np.int64)


def has_self_intersection(mesh: TriangleMesh) -> bool:
    return len(self_intersecting_pairs(mesh, first_only=True)) > 0
