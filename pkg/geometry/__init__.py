"""
Meshes, occupancy queries, surface sampling, iso-surfaces and Chamfer distance.
"""
from geometry.mesh import TriangleMesh, merge_vertices, normalize_unit_cube
from geometry.inside import occupancy_query
from geometry.sampling import VolumeEstimate, surface_sample, volume_fraction
from geometry.isosurface import VoxelGrid, marching_cubes
from geometry.chamfer import chamfer_distance, chamfer_distance_bruteforce

__all__ = [
    "TriangleMesh",
    "merge_vertices",
    "normalize_unit_cube",
    "occupancy_query",
    "VolumeEstimate",
    "surface_sample",
    "volume_fraction",
    "VoxelGrid",
    "marching_cubes",
    "chamfer_distance",
    "chamfer_distance_bruteforce",
]
