"""
Betti numbers of voxel solids and label verification.

A voxel set is read as the union of closed unit cubes. Its Euler
characteristic comes from counting the distinct cells of that cubical
complex; beta0 counts foreground components (26-connected, since closed cubes
touching at a corner are joined) and beta2 counts bounded background
components (6-connected). beta1 follows from chi = beta0 - beta1 + beta2.

``homology_oracle`` computes the same numbers independently by reducing the
boundary matrices over GF(2); it is meant for small grids only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import generate_binary_structure, label

from topogen.errors import OracleRefusalError
from topogen.mesh import TriangleMesh, genus
from topogen.voxels import VoxelGrid

ORACLE_MAX_RESOLUTION = 16

GridLike = Union[VoxelGrid, np.ndarray]


class BettiTriple(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    beta0: int = Field(ge=0)
    beta1: int = Field(ge=0)
    beta2: int = Field(ge=0)
    chi: int

    @model_validator(mode="after")
    def _euler(self) -> "BettiTriple":
        if self.chi != self.beta0 - self.beta1 + self.beta2:
            raise ValueError(f"chi={self.chi} disagrees with betti numbers {self.as_tuple()}")
        return self

    @classmethod
    def of(cls, beta0: int, beta1: int, beta2: int) -> "BettiTriple":
        return cls(beta0=beta0, beta1=beta1, beta2=beta2, chi=beta0 - beta1 + beta2)

    def as_tuple(self) -> Tuple[int, int, int]:
        return self.beta0, self.beta1, self.beta2


@dataclass(frozen=True)
class CubicalComplexCounts:
    vertices: int
    edges: int
    squares: int
    cubes: int

    @property
    def euler(self) -> int:
        return self.vertices - self.edges + self.squares - self.cubes


def _occupancy(grid: GridLike) -> np.ndarray:
    occ = grid.occupancy if isinstance(grid, VoxelGrid) else np.asarray(grid, dtype=bool)
    if occ.ndim != 3:
        raise ValueError(f"expected a 3D occupancy array, got shape {occ.shape}")
    return occ


def _cell_count(padded: np.ndarray, shape: Sequence[int], span: Sequence[bool]) -> int:
    """
    Cells spanning the axes flagged in ``span``: such a cell exists if any
    cube containing it is occupied. Unspanned axes sit on lattice planes shared
    by the two neighbouring cubes.
    """
    acc = None
    for shift in itertools.product(*[(1,) if s else (0, 1) for s in span]):
        sl = tuple(slice(d, d + n + (0 if s else 1)) for d, n, s in zip(shift, shape, span))
        acc = padded[sl] if acc is None else acc | padded[sl]
    return int(np.count_nonzero(acc))


def cubical_counts(grid: GridLike) -> CubicalComplexCounts:
    occ = _occupancy(grid)
    padded = np.pad(occ, 1)
    by_dim = [0, 0, 0, 0]
    for span in itertools.product((False, True), repeat=3):
        by_dim[sum(span)] += _cell_count(padded, occ.shape, span)
    return CubicalComplexCounts(*by_dim)


def betti_voxel(grid: GridLike) -> BettiTriple:
    occ = _occupancy(grid)
    if not occ.any():
        return BettiTriple.of(0, 0, 0)
    beta0 = int(label(occ, structure=np.ones((3, 3, 3), dtype=int))[1])
    background = np.pad(~occ, 1, constant_values=True)
    beta2 = int(label(background, structure=generate_binary_structure(3, 1))[1]) - 1
    chi = cubical_counts(occ).euler
    return BettiTriple(beta0=beta0, beta1=beta0 + beta2 - chi, beta2=beta2, chi=chi)


def _rank_gf2(columns: List[int]) -> int:
    pivots: Dict[int, int] = {}
    rank = 0
    for col in columns:
        while col:
            low = col & -col
            if low in pivots:
                col ^= pivots[low]
            else:
                pivots[low] = col
                rank += 1
                break
    return rank


def homology_oracle(grid: GridLike) -> BettiTriple:
    """Betti numbers from GF(2) ranks of the cubical boundary matrices."""
    occ = _occupancy(grid)
    if max(occ.shape) > ORACLE_MAX_RESOLUTION:
        raise OracleRefusalError(
            f"oracle is limited to {ORACLE_MAX_RESOLUTION} voxels per axis, got {occ.shape}"
        )
    # cells live on the doubled lattice; odd coordinates are the spanned axes
    cells = set()
    for z, y, x in np.argwhere(occ):
        for d in itertools.product(range(3), repeat=3):
            cells.add((2 * int(z) + d[0], 2 * int(y) + d[1], 2 * int(x) + d[2]))
    by_dim: List[List[Tuple[int, int, int]]] = [[], [], [], []]
    for cell in sorted(cells):
        by_dim[sum(c & 1 for c in cell)].append(cell)
    index = [{cell: i for i, cell in enumerate(group)} for group in by_dim]

    def boundary_columns(dim: int) -> List[int]:
        cols = []
        for cell in by_dim[dim]:
            col = 0
            for axis in range(3):
                if cell[axis] & 1:
                    for step in (-1, 1):
                        face = list(cell)
                        face[axis] += step
                        col |= 1 << index[dim - 1][tuple(face)]
            cols.append(col)
        return cols

    n = [len(group) for group in by_dim]
    r1, r2, r3 = (_rank_gf2(boundary_columns(d)) for d in (1, 2, 3))
    return BettiTriple.of(n[0] - r1, n[1] - r1 - r2, n[2] - r2 - r3)


class VerificationReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    expected: BettiTriple
    actual: BettiTriple
    passes: Dict[str, bool]
    passed: bool


def verify_sample(grid: GridLike, expected_genus: int) -> VerificationReport:
    """Compare the measured Betti numbers with those of a genus-g handlebody (1, g, 0)."""
    expected = BettiTriple.of(1, int(expected_genus), 0)
    actual = betti_voxel(grid)
    passes = {
        "beta0": actual.beta0 == expected.beta0,
        "beta1": actual.beta1 == expected.beta1,
        "beta2": actual.beta2 == expected.beta2,
    }
    return VerificationReport(expected=expected, actual=actual, passes=passes, passed=all(passes.values()))


def surface_betti(mesh: TriangleMesh) -> BettiTriple:
    """(1, 2g, 1) with chi = 2 - 2g for a closed connected orientable surface."""
    g = genus(mesh)
    return BettiTriple.of(1, 2 * g, 1)


@dataclass(frozen=True)
class SliceBetti:
    components: int
    holes: int


def slice_betti(image: np.ndarray) -> SliceBetti:
    """Components (8-connected) and holes (bounded 4-connected background) of a binary slice."""
    img = np.asarray(image, dtype=bool)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    components = label(img, structure=np.ones((3, 3), dtype=int))[1]
    background = np.pad(~img, 1, constant_values=True)
    holes = label(background, structure=generate_binary_structure(2, 1))[1] - 1
    return SliceBetti(components=int(components), holes=int(holes))
