"""
Mesh files through trimesh. Meshes are built and loaded with
``process=False`` so vertex order and connectivity survive a round trip;
PLY is binary little-endian with float32 positions and int32 face indices.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
import trimesh

from topogen.mesh import TriangleMesh

PathLike = Union[str, Path]


def _export(path: PathLike, vertices: np.ndarray, faces: np.ndarray, file_type: str, **kwargs) -> None:
    mesh = trimesh.Trimesh(vertices=np.asarray(vertices), faces=np.asarray(faces), process=False)
    mesh.export(str(path), file_type=file_type, **kwargs)


def _load(path: PathLike, file_type: str, validate: bool) -> TriangleMesh:
    loaded = trimesh.load_mesh(str(path), file_type=file_type, process=False, maintain_order=True)
    verts = np.asarray(loaded.vertices, dtype=np.float64)
    faces = np.asarray(loaded.faces, dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(verts, faces, validate=validate)


def write_obj_arrays(path: PathLike, vertices: np.ndarray, faces: np.ndarray) -> None:
    _export(path, vertices, faces, "obj")


def write_obj(mesh: TriangleMesh, path: PathLike) -> None:
    _export(path, mesh.vertices, mesh.faces, "obj")


def read_obj(path: PathLike, validate: bool = True) -> TriangleMesh:
    return _load(path, "obj", validate)


def write_ply(mesh: TriangleMesh, path: PathLike) -> None:
    _export(path, mesh.vertices, mesh.faces, "ply", encoding="binary")


def read_ply(path: PathLike, validate: bool = True) -> TriangleMesh:
    return _load(path, "ply", validate)
