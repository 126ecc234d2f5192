"""Cross fields and quad layouts on planar triangle meshes via the Ginzburg-Landau / MBO approach."""

from .mesh import TriMesh, MeshError, load_mesh, detect_corners, assign_boundary_condition
from .gl import MBOParams, RepresentationField, SingularityConfig, mbo_minimize, canonical_harmonic_map
from .crossfield import detect_singularities

__version__ = "0.1.0"

__all__ = [
    "TriMesh",
    "MeshError",
    "load_mesh",
    "detect_corners",
    "assign_boundary_condition",
    "MBOParams",
    "RepresentationField",
    "SingularityConfig",
    "mbo_minimize",
    "canonical_harmonic_map",
    "detect_singularities",
]
