"""
Genus-g seed meshes: a thickened plate with g rectangular through-holes.

The plate is a lattice of unit cells (a row of picture-frame cells for small g,
a near-square grid above ``row_limit``), extruded to ``thickness_cells`` and
turned into its boundary surface quad by quad. Holes are separated by bars at
least one cell wide, so no two solid cells meet only along an edge and the
boundary is a closed 2-manifold of genus g by construction.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from topogen.errors import MeshStructureError
from topogen.mesh import TriangleMesh, euler_characteristic, genus, subdivide

logger = logging.getLogger(__name__)

Corner = Tuple[int, int, int]


class SeedParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hole_cells: int = Field(1, ge=1, description="hole width in lattice cells")
    bar_cells: int = Field(1, ge=1, description="bar width between holes in lattice cells")
    thickness_cells: int = Field(1, ge=1)
    cell_size: float = Field(1.0, gt=0)
    row_limit: int = Field(5, ge=1, description="largest genus laid out as a single row")
    subdivisions: int = Field(0, ge=0, le=4)
    max_genus: int = Field(20, ge=0)


def hole_layout(g: int, row_limit: int = 5) -> Tuple[int, int]:
    """(rows, cols) of frame cells holding g holes; extra cells stay filled."""
    if g <= row_limit:
        return 1, max(g, 1)
    cols = math.ceil(math.sqrt(g))
    return math.ceil(g / cols), cols


def frame_mask(g: int, params: SeedParams) -> np.ndarray:
    """Boolean [x, y] occupancy of the plate; False marks hole cells."""
    rows, cols = hole_layout(g, params.row_limit)
    h, b = params.hole_cells, params.bar_cells
    mask = np.ones((cols * h + (cols + 1) * b, rows * h + (rows + 1) * b), dtype=bool)
    for k in range(g):
        r, c = divmod(k, cols)
        x0 = b + c * (h + b)
        y0 = b + r * (h + b)
        mask[x0:x0 + h, y0:y0 + h] = False
    return mask


def _boundary_quads(mask: np.ndarray, thickness: int) -> List[List[Corner]]:
    nx, ny = mask.shape
    t = thickness

    def solid(x: int, y: int) -> bool:
        return 0 <= x < nx and 0 <= y < ny and bool(mask[x, y])

    quads: List[List[Corner]] = []
    for x, y in np.argwhere(mask):
        x, y = int(x), int(y)
        quads.append([(x, y, t), (x + 1, y, t), (x + 1, y + 1, t), (x, y + 1, t)])
        quads.append([(x, y, 0), (x, y + 1, 0), (x + 1, y + 1, 0), (x + 1, y, 0)])
        for z in range(t):
            if not solid(x + 1, y):
                X = x + 1
                quads.append([(X, y, z), (X, y + 1, z), (X, y + 1, z + 1), (X, y, z + 1)])
            if not solid(x - 1, y):
                quads.append([(x, y, z), (x, y, z + 1), (x, y + 1, z + 1), (x, y + 1, z)])
            if not solid(x, y + 1):
                Y = y + 1
                quads.append([(x, Y, z), (x, Y, z + 1), (x + 1, Y, z + 1), (x + 1, Y, z)])
            if not solid(x, y - 1):
                quads.append([(x, y, z), (x + 1, y, z), (x + 1, y, z + 1), (x, y, z + 1)])
    return quads


def _weld(quads: List[List[Corner]]) -> Tuple[np.ndarray, np.ndarray]:
    index: Dict[Corner, int] = {}
    corners: List[Corner] = []
    faces = []
    for quad in quads:
        ids = []
        for c in quad:
            if c not in index:
                index[c] = len(corners)
                corners.append(c)
            ids.append(index[c])
        a, b, c, d = ids
        faces.append((a, b, c))
        faces.append((a, c, d))
    return np.asarray(corners, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def make_genus_g_seed(g: int, params: Optional[SeedParams] = None) -> TriangleMesh:
    params = params or SeedParams()
    if g < 0 or g > params.max_genus:
        raise ValueError(f"genus must be within [0, {params.max_genus}], got {g}")

    mask = frame_mask(g, params)
    verts, faces = _weld(_boundary_quads(mask, params.thickness_cells))
    centre = np.array([mask.shape[0], mask.shape[1], params.thickness_cells], dtype=np.float64) / 2.0
    mesh = TriangleMesh((verts - centre) * params.cell_size, faces)
    for _ in range(params.subdivisions):
        mesh = subdivide(mesh)

    chi = euler_characteristic(mesh)
    if chi != 2 - 2 * g or genus(mesh) != g:
        raise MeshStructureError(f"seed for genus {g} came out with chi={chi}")
    logger.debug("seed genus=%d V=%d F=%d chi=%d", g, mesh.vertex_count, mesh.face_count, chi)
    return mesh
