"""Exception hierarchy shared by every stage of the generator."""

from __future__ import annotations

from typing import Optional, Tuple


class TopogenError(Exception):
    """Base class for generation and verification failures."""


class ConfigError(TopogenError):
    pass


class MeshStructureError(TopogenError):
    """A mesh violates the closed, oriented, manifold contract."""

    def __init__(self, message: str, edge: Optional[Tuple[int, int]] = None):
        super().__init__(message)
        self.edge = edge


class DisconnectedMeshError(MeshStructureError):
    def __init__(self, component_count: int):
        super().__init__(f"mesh has {component_count} connected components, expected 1")
        self.component_count = component_count


class UnsatisfiableTilingError(TopogenError):
    pass


class SingularConfigurationError(TopogenError):
    pass


class PlacementError(TopogenError):
    pass


class GrowthStalledError(TopogenError):
    def __init__(self, area_ratio: float, iterations: int):
        super().__init__(
            f"growth stalled at area ratio {area_ratio:.4f} after {iterations} iterations"
        )
        self.area_ratio = area_ratio
        self.iterations = iterations


class DisplacementError(TopogenError):
    pass


class VoxelizationError(TopogenError):
    pass


class OracleRefusalError(TopogenError):
    pass


class GenerationError(TopogenError):
    pass


class SampleNotFoundError(TopogenError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)
