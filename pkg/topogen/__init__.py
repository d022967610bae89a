"""
topogen: synthetic 3D shapes with known genus, grown inside obstacle
environments and exported as voxel grids, point clouds and slices.
"""

__version__ = "0.3.0"
