import functools
import math

import numpy as np
import pytest
from scipy.spatial import Delaunay

from glcross import crossfield as cf
from glcross import domains, gl
from glcross import layout as lay
from glcross import trace as tr
from glcross.mesh import TriMesh, assign_boundary_condition, detect_corners


def prepare(mesh, overrides=None):
    """Mesh with corners attached, corner list and boundary data."""
    corners = detect_corners(mesh, overrides=overrides)
    mesh = mesh.with_corners(corners)
    corners = detect_corners(mesh, overrides=overrides)
    return mesh, corners, assign_boundary_condition(mesh, corners)


@functools.lru_cache(maxsize=None)
def domain(name, h):
    return prepare(domains.DOMAINS[name](h))


@functools.lru_cache(maxsize=None)
def mbo_field(name, h):
    mesh, corners, bc = domain(name, h)
    return gl.mbo_minimize(mesh, bc, gl.MBOParams())


@functools.lru_cache(maxsize=None)
def prescribed_field(name, h, locations, degrees):
    mesh, corners, bc = domain(name, h)
    return gl.canonical_harmonic_map(mesh, bc, gl.SingularityConfig(list(locations), list(degrees)))


class Pipeline:
    """Detection, tracing, partition, layout and region report for one field."""

    def __init__(self, mesh, corners, rep):
        self.mesh, self.corners, self.rep = mesh, corners, rep
        self.sings = cf.detect_singularities(rep)
        self.S, self.P, self.L = tr.trace_separatrices(rep, self.sings, corners)
        self.result = tr.partition(rep, self.S, self.P, self.L)
        self.layout = lay.build_layout(mesh, self.result, corners, self.sings, rep=rep)
        self.report = lay.validate_regions(self.layout, rep)


@functools.lru_cache(maxsize=None)
def mbo_pipeline(name, h):
    mesh, corners, _ = domain(name, h)
    return Pipeline(mesh, corners, mbo_field(name, h).field)


@functools.lru_cache(maxsize=None)
def prescribed_pipeline(name, h, locations, degrees):
    mesh, corners, _ = domain(name, h)
    return Pipeline(mesh, corners, prescribed_field(name, h, locations, degrees))


@functools.lru_cache(maxsize=None)
def limit_cycle_pipeline(h=0.06):
    mesh, values = domains.limit_cycle_example(h)
    return Pipeline(mesh, [], gl.RepresentationField(mesh, values))


# hexagon with a prescribed -1/2 center, block-U with a prescribed -1/4 pair
HEX_CENTER = (((0.013, 0.007),), (-2,))
BLOCK_U_PAIR = (((-1.12, 0.33), (1.12, 0.33)), (-1, -1))


def small_mesh(n_ring=8, interior=((0.1, 0.05), (-0.2, -0.1)), radius=1.0, seed=None):
    """Delaunay triangulation of a perturbed ring of boundary points plus interior points."""
    t = np.linspace(0, 2 * math.pi, n_ring, endpoint=False)
    ring = radius * np.column_stack([np.cos(t), np.sin(t)])
    if seed is not None:
        ring *= 1.0 + 0.1 * np.random.default_rng(seed).random((n_ring, 1))
    pts = np.vstack([ring, np.asarray(interior, dtype=float).reshape(-1, 2)])
    return TriMesh(pts, Delaunay(pts).simplices)


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"
