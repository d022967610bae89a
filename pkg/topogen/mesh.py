"""
Closed, oriented, manifold triangle meshes with exact topological bookkeeping.

A TriangleMesh is an immutable value: every operation that moves vertices
returns a new mesh that shares the (read-only) face array of its parent, so
V, E, F and the Euler characteristic of a deformed mesh are those of the seed
it came from.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from functools import cached_property
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.transform import Rotation

from topogen.errors import DisconnectedMeshError, MeshStructureError

Vector3 = Union[Sequence[float], np.ndarray]

DEGENERATE_AREA = 1e-14  # relative to the squared bounding-box diagonal


def _edge_table(faces: np.ndarray):
    """Unique undirected edges, their face counts, and the face-edge -> edge map."""
    half = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    undirected = np.sort(half, axis=1)
    edges, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    return edges, counts, inverse.reshape(-1)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.flags.writeable:
            f = f.copy()
            f.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshStructureError("face references a vertex index out of range")
        if validate:
            self.check()

    # ------------------------------------------------------------------ checks
    def check(self) -> None:
        """Raise MeshStructureError unless the mesh is a closed oriented 2-manifold."""
        if len(self.faces) == 0:
            raise MeshStructureError("mesh has no faces")
        edges, counts, _ = _edge_table(self.faces)
        bad = np.flatnonzero(counts != 2)
        if bad.size:
            a, b = edges[bad[0]]
            raise MeshStructureError(
                f"edge ({a}, {b}) has {counts[bad[0]]} incident faces", edge=(int(a), int(b))
            )
        directed = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        uniq, dcounts = np.unique(directed, axis=0, return_counts=True)
        if np.any(dcounts > 1):
            a, b = uniq[np.argmax(dcounts)]
            raise MeshStructureError(
                f"inconsistent winding across edge ({a}, {b})", edge=(int(a), int(b))
            )
        if len(np.unique(self.faces)) != len(self.vertices):
            raise MeshStructureError("mesh has unreferenced vertices")
        lo, hi = self.bounds
        scale = float(np.sum((hi - lo) ** 2)) or 1.0
        if np.any(self.face_areas <= DEGENERATE_AREA * scale):
            raise MeshStructureError("mesh has degenerate (zero-area) faces")

    # -------------------------------------------------------------- geometry
    @cached_property
    def edges(self) -> np.ndarray:
        return _edge_table(self.faces)[0]

    @cached_property
    def _face_cross(self) -> np.ndarray:
        p = self.vertices[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._face_cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        n = self._face_cross
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    @cached_property
    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals."""
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.faces[:, k], self._face_cross)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return acc / np.where(norm > 0, norm, 1.0)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same connectivity, new positions. Connectivity was validated on the parent."""
        return TriangleMesh(vertices, self.faces, validate=False)


@dataclass(frozen=True)
class TopologySummary:
    vertex_count: int
    edge_count: int
    face_count: int
    euler_characteristic: int
    genus: int
    component_count: int


def euler_characteristic(mesh: TriangleMesh) -> int:
    edges, counts, _ = _edge_table(mesh.faces)
    bad = np.flatnonzero(counts != 2)
    if bad.size:
        a, b = edges[bad[0]]
        raise MeshStructureError(
            f"non-manifold edge ({a}, {b}) with {counts[bad[0]]} incident faces",
            edge=(int(a), int(b)),
        )
    return int(mesh.vertex_count - len(edges) + mesh.face_count)


def component_count(mesh: TriangleMesh) -> int:
    e = mesh.edges
    n = mesh.vertex_count
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return int(connected_components(adj, directed=False)[0])


def genus(mesh: TriangleMesh) -> int:
    chi = euler_characteristic(mesh)
    comps = component_count(mesh)
    if comps != 1:
        raise DisconnectedMeshError(comps)
    if chi % 2:
        raise MeshStructureError(f"odd Euler characteristic {chi} on a closed orientable surface")
    return (2 - chi) // 2


def topology_summary(mesh: TriangleMesh) -> TopologySummary:
    chi = euler_characteristic(mesh)
    comps = component_count(mesh)
    if chi % 2:
        raise MeshStructureError(f"odd Euler characteristic {chi} on a closed orientable surface")
    return TopologySummary(
        vertex_count=mesh.vertex_count,
        edge_count=len(mesh.edges),
        face_count=mesh.face_count,
        euler_characteristic=chi,
        genus=(2 * comps - chi) // 2,
        component_count=comps,
    )


def surface_area(mesh: TriangleMesh) -> float:
    return float(mesh.face_areas.sum())


def mean_edge_length(mesh: TriangleMesh) -> float:
    e = mesh.edges
    return float(np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1).mean())


def transform(
    mesh: TriangleMesh,
    rotation: Vector3 = (0.0, 0.0, 0.0),
    scale: Union[float, Vector3] = 1.0,
    translation: Vector3 = (0.0, 0.0, 0.0),
) -> TriangleMesh:
    """Scale, then rotate (x, then y, then z axis), then translate."""
    s = np.broadcast_to(np.asarray(scale, dtype=np.float64), (3,))
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError(f"scale factors must be positive, got {tuple(s)}")
    r = Rotation.from_euler("xyz", np.asarray(rotation, dtype=np.float64)).as_matrix()
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    return mesh.with_vertices((mesh.vertices * s) @ r.T + t)


def subdivide(mesh: TriangleMesh) -> TriangleMesh:
    """Midpoint (1 -> 4) subdivision. Geometry and topology are unchanged."""
    edges, _, face_edge = _edge_table(mesh.faces)
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    base = mesh.vertex_count
    fe = face_edge.reshape(-1, 3) + base  # edges (a,b), (b,c), (c,a)
    a, b, c = mesh.faces.T
    ab, bc, ca = fe.T
    faces = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([b, bc, ab], axis=1),
            np.stack([c, ca, bc], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )
    return TriangleMesh(np.vstack([mesh.vertices, mids]), faces, validate=False)


_BOX_FACES = np.array(
    [
        [0, 2, 3], [0, 3, 1],  # -z
        [4, 5, 7], [4, 7, 6],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 6, 7], [2, 7, 3],  # +y
        [0, 4, 6], [0, 6, 2],  # -x
        [1, 3, 7], [1, 7, 5],  # +x
    ]
)


def box_mesh(lo: Vector3, hi: Vector3) -> TriangleMesh:
    """Closed cuboid shell with outward normals."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    bits = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=bool)
    return TriangleMesh(np.where(bits, hi, lo), _BOX_FACES)
