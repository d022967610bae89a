"""
Tile-based Wave Function Collapse over a 3D grid, and the strut environments
built from it.

Rules are stored as a (6, n, n) boolean array: ``rules[d, a, b]`` is True when
tile ``b`` may sit next to tile ``a`` in direction ``d``. Directions are ordered
+x, -x, +y, -y, +z, -z so the opposite of ``d`` is ``d ^ 1``.

Each attempt collapses the lowest-entropy cell (fewest remaining tiles, ties
broken uniformly at random) and propagates constraints to a fixpoint. A
contradiction restarts the whole grid on a fresh random substream.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from topogen.environment import Environment
from topogen.errors import UnsatisfiableTilingError

logger = logging.getLogger(__name__)

DIRECTIONS = ("+x", "-x", "+y", "-y", "+z", "-z")
OFFSETS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])

Box = Tuple[Tuple[float, float, float], Tuple[float, float, float]]


@dataclass(frozen=True, eq=False)
class TileSet:
    tiles: Tuple[str, ...]
    rules: np.ndarray
    weights: Optional[np.ndarray] = None
    boxes: Optional[Tuple[Tuple[Box, ...], ...]] = None  # per tile, unit-cell coordinates

    def __post_init__(self) -> None:
        n = len(self.tiles)
        if n == 0:
            raise ValueError("tile set is empty")
        rules = np.asarray(self.rules, dtype=bool)
        if rules.shape != (6, n, n):
            raise ValueError(f"rules must have shape (6, {n}, {n}), got {rules.shape}")
        for d in range(0, 6, 2):
            if not np.array_equal(rules[d], rules[d + 1].T):
                raise ValueError(f"rules for {DIRECTIONS[d]} and {DIRECTIONS[d + 1]} are inconsistent")
        weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (n,) or np.any(weights <= 0):
            raise ValueError("tile weights must be positive, one per tile")
        if self.boxes is not None and len(self.boxes) != n:
            raise ValueError("boxes must list one entry per tile")
        rules.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "tiles", tuple(self.tiles))
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.tiles)

    @classmethod
    def from_json(cls, source: Union[str, Path, Mapping[str, Any]]) -> "TileSet":
        """
        Load a tile set document::

            {"tiles": ["empty", {"name": "post", "weight": 0.5,
                                 "boxes": [[[0.4, 0.4, 0], [0.6, 0.6, 1]]]}],
             "rules": [{"a": "post", "b": "post", "direction": "+z"}, ...]}

        Every rule is mirrored, so listing (a, b, +x) also allows (b, a, -x).
        """
        doc = source if isinstance(source, Mapping) else json.loads(Path(source).read_text(encoding="utf-8"))
        names: List[str] = []
        weights: List[float] = []
        boxes: List[Tuple[Box, ...]] = []
        with_boxes = False
        for entry in doc["tiles"]:
            if isinstance(entry, str):
                entry = {"name": entry}
            names.append(str(entry["name"]))
            weights.append(float(entry.get("weight", 1.0)))
            if "boxes" in entry:
                with_boxes = True
            boxes.append(tuple((tuple(lo), tuple(hi)) for lo, hi in entry.get("boxes", [])))
        if len(set(names)) != len(names):
            raise ValueError("tile names must be unique")
        index = {name: i for i, name in enumerate(names)}
        rules = np.zeros((6, len(names), len(names)), dtype=bool)
        for rule in doc.get("rules", []):
            try:
                a, b = index[rule["a"]], index[rule["b"]]
                d = DIRECTIONS.index(rule["direction"])
            except (KeyError, ValueError) as exc:
                raise ValueError(f"bad tile rule {rule!r}") from exc
            rules[d, a, b] = True
            rules[d ^ 1, b, a] = True
        return cls(tuple(names), rules, np.asarray(weights), tuple(boxes) if with_boxes else None)


def single_tile_set(compatible: bool = True) -> TileSet:
    return TileSet(("solid",), np.full((6, 1, 1), compatible))


def checkerboard_tile_set() -> TileSet:
    unlike = np.array([[False, True], [True, False]])
    return TileSet(("black", "white"), np.broadcast_to(unlike, (6, 2, 2)).copy())


def _connectors(mask: int) -> List[int]:
    return [d for d in range(6) if mask >> d & 1]


def _strut_boxes(mask: int, thickness: float) -> Tuple[Box, ...]:
    if mask == 0:
        return ()
    a, b = 0.5 - thickness / 2, 0.5 + thickness / 2
    out: List[Box] = [((a, a, a), (b, b, b))]
    for d in _connectors(mask):
        axis, positive = d // 2, d % 2 == 0
        lo, hi = [a, a, a], [b, b, b]
        if positive:
            hi[axis] = 1.0
        else:
            lo[axis] = 0.0
        out.append((tuple(lo), tuple(hi)))
    return tuple(out)


def strut_tile_set(thickness: float = 0.15, connector_weight: float = 0.35) -> TileSet:
    """
    64 tiles, one per subset of the six cell faces. A tile draws a hub at the
    cell centre plus one arm to each face in its subset; neighbouring tiles
    must agree on whether their shared face carries an arm.
    """
    if not 0 < thickness < 1:
        raise ValueError("strut thickness must lie in (0, 1) of a cell")
    masks = range(64)
    has = np.array([[m >> d & 1 for d in range(6)] for m in masks], dtype=bool)
    rules = np.stack([has[:, d][:, None] == has[:, d ^ 1][None, :] for d in range(6)])
    weights = np.array([connector_weight ** bin(m).count("1") for m in masks])
    names = tuple("".join(DIRECTIONS[d] for d in _connectors(m)) or "empty" for m in masks)
    boxes = tuple(_strut_boxes(m, thickness) for m in masks)
    return TileSet(names, rules, weights, boxes)


class _Contradiction(Exception):
    pass


def _propagate(wave: np.ndarray, stack: List[Tuple[int, int, int]], rules: np.ndarray) -> None:
    dims = wave.shape[:3]
    while stack:
        cell = stack.pop()
        allowed = wave[cell]
        for d, off in enumerate(OFFSETS):
            nb = (cell[0] + off[0], cell[1] + off[1], cell[2] + off[2])
            if not all(0 <= nb[k] < dims[k] for k in range(3)):
                continue
            narrowed = wave[nb] & rules[d][allowed].any(axis=0)
            if not narrowed.any():
                raise _Contradiction(nb)
            if not np.array_equal(narrowed, wave[nb]):
                wave[nb] = narrowed
                stack.append(nb)


def _collapse_once(dims: Tuple[int, int, int], tile_set: TileSet, rng: np.random.Generator) -> np.ndarray:
    wave = np.ones(dims + (len(tile_set),), dtype=bool)
    _propagate(wave, [tuple(c) for c in np.ndindex(*dims)], tile_set.rules)
    while True:
        counts = wave.sum(axis=-1)
        open_cells = counts > 1
        if not open_cells.any():
            return wave.argmax(axis=-1)
        lowest = counts[open_cells].min()
        candidates = np.argwhere(open_cells & (counts == lowest))
        cell = tuple(int(i) for i in candidates[rng.integers(len(candidates))])
        options = np.flatnonzero(wave[cell])
        w = tile_set.weights[options]
        choice = rng.choice(options, p=w / w.sum())
        wave[cell] = False
        wave[cell + (choice,)] = True
        _propagate(wave, [cell], tile_set.rules)


def wfc_collapse(
    grid_dims: Sequence[int],
    tile_set: TileSet,
    rng_seed: int,
    max_restarts: int = 32,
) -> np.ndarray:
    """Collapse a grid_dims-shaped [x, y, z] grid into tile indices."""
    dims = tuple(int(n) for n in grid_dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"grid_dims must be three positive extents, got {grid_dims}")
    if max_restarts < 0:
        raise ValueError("max_restarts must be nonnegative")
    seed = int(rng_seed) & 0xFFFFFFFFFFFFFFFF

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(max_restarts + 1),
            retry=retry_if_exception_type(_Contradiction),
            before_sleep=before_sleep_log(logger, logging.DEBUG),
            reraise=True,
        ):
            with attempt:
                rng = np.random.default_rng([seed, attempt.retry_state.attempt_number - 1])
                grid = _collapse_once(dims, tile_set, rng)
    except _Contradiction as exc:
        raise UnsatisfiableTilingError(
            f"no valid tiling of {dims} after {max_restarts} restarts (contradiction at {exc.args[0]})"
        ) from exc
    return grid


def rule_violations(grid: np.ndarray, tile_set: TileSet) -> int:
    """Number of adjacent cell pairs whose tiles break the rules."""
    bad = 0
    for d in (0, 2, 4):
        axis = d // 2
        a = np.moveaxis(grid, axis, 0)[:-1]
        b = np.moveaxis(grid, axis, 0)[1:]
        bad += int(np.count_nonzero(~tile_set.rules[d][a, b]))
    return bad


class WfcEnvironmentSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid_dims: Tuple[int, int, int] = (5, 5, 5)
    cube_side: float = Field(20.0, gt=0)
    strut_thickness: float = Field(0.15, gt=0, lt=1, description="fraction of a cell")
    connector_weight: float = Field(0.35, gt=0)
    tile_set_path: Optional[str] = None
    max_restarts: int = Field(32, ge=0)

    @field_validator("grid_dims")
    @classmethod
    def _positive(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if min(v) < 1:
            raise ValueError("grid_dims must be positive")
        return v


def wfc_environment(spec: WfcEnvironmentSpec, rng_seed: int) -> Environment:
    if spec.tile_set_path:
        tile_set = TileSet.from_json(spec.tile_set_path)
    else:
        tile_set = strut_tile_set(spec.strut_thickness, spec.connector_weight)
    if tile_set.boxes is None:
        raise ValueError("tile set has no box geometry; cannot build an environment")

    grid = wfc_collapse(spec.grid_dims, tile_set, rng_seed, spec.max_restarts)
    cell = spec.cube_side / np.asarray(spec.grid_dims, dtype=np.float64)
    lows, highs = [], []
    for idx in np.ndindex(*grid.shape):
        for lo, hi in tile_set.boxes[grid[idx]]:
            lows.append((np.asarray(idx) + lo) * cell)
            highs.append((np.asarray(idx) + hi) * cell)
    lo = np.clip(np.asarray(lows).reshape(-1, 3), 0.0, spec.cube_side)
    hi = np.clip(np.asarray(highs).reshape(-1, 3), 0.0, spec.cube_side)
    keep = np.all(hi > lo, axis=1)
    logger.debug("wfc environment seed=%d boxes=%d", rng_seed, int(keep.sum()))
    return Environment(
        lo[keep],
        hi[keep],
        spec.cube_side,
        provenance={
            "method": "wfc",
            "spec": spec.model_dump(mode="json"),
            "rng_seed": int(rng_seed),
            "tiles": [tile_set.tiles[t] for t in grid.ravel()],
        },
    )
