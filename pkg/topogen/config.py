"""
Dataset configuration: one pydantic model per stage, gathered in DatasetConfig
and loaded from YAML or JSON documents.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from topogen.displacement import DisplacementConfig
from topogen.environment import Environment, RandomGridSpec, random_grid_environment
from topogen.errors import ConfigError
from topogen.growth import GrowthConfig, PlacementConfig
from topogen.seeds import SeedParams
from topogen.voxels import DEFAULT_OCTAVES, NoiseOctaveSpec
from topogen.wfc import WfcEnvironmentSpec, wfc_environment


class EnvironmentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["random_grid", "wfc"] = "random_grid"
    random_grid: RandomGridSpec = RandomGridSpec()
    wfc: WfcEnvironmentSpec = WfcEnvironmentSpec()

    def build(self, rng_seed: int) -> Environment:
        if self.method == "wfc":
            return wfc_environment(self.wfc, rng_seed)
        return random_grid_environment(self.random_grid, rng_seed)


class DatasetConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    genus_range: Tuple[int, int] = (0, 20)
    samples_per_genus: int = Field(1, ge=1)
    voxel_resolution: int = Field(256, ge=8)
    voxel_pad: int = Field(2, ge=1)
    seed: SeedParams = SeedParams()
    placement: PlacementConfig = PlacementConfig()
    growth: GrowthConfig = GrowthConfig()
    environment: EnvironmentConfig = EnvironmentConfig()
    displacement: DisplacementConfig = DisplacementConfig()
    noise: Tuple[NoiseOctaveSpec, ...] = DEFAULT_OCTAVES
    smoothing_sigma: float = Field(0.25, ge=0)
    point_count: int = Field(8192, ge=1)
    surface_point_count: int = Field(0, ge=0, description="0 disables the surface point export")
    master_seed: int = Field(0, ge=0, lt=2**64)
    output_directory: str = "dataset"
    train_test_split: float = Field(0.8, gt=0, lt=1)
    view_slices: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _genus(self) -> "DatasetConfig":
        lo, hi = self.genus_range
        if lo < 0 or lo > hi:
            raise ValueError("genus_range must satisfy 0 <= min <= max")
        if hi > self.seed.max_genus:
            raise ValueError(f"genus_range exceeds the seed ceiling {self.seed.max_genus}")
        if self.voxel_resolution - 2 * self.voxel_pad < 1:
            raise ValueError("voxel_resolution leaves no room inside the pad")
        return self

    @property
    def genera(self) -> range:
        return range(self.genus_range[0], self.genus_range[1] + 1)


def load_config(path: Union[str, Path]) -> DatasetConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    try:
        return DatasetConfig.model_validate(doc or {})
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}:\n{exc}") from exc
