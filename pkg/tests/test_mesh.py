import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import domain, prepare
from glcross import domains
from glcross.mesh import (
    BoundaryCondition,
    MeshError,
    TriMesh,
    bisector_value,
    brouwer_degree,
    corner_quarters_for_angle,
    detect_corners,
    effective_degree,
    index_budget,
    load_corner_overrides,
    load_mesh,
    loop_winding,
    refine_uniform,
    write_obj,
    write_off,
)

SQUARE_OFF = """OFF
4 2 0
0 0 0
1 0 0
1 1 0
0 1 0
3 0 1 2
3 0 2 3
"""


# -- loading ---------------------------------------------------------------------


def test_off_unit_square(tmp_path):
    p = tmp_path / "sq.off"
    p.write_text(SQUARE_OFF)
    m = load_mesh(p)
    assert m.n_vertices == 4
    assert len(m.boundary_loops) == 1
    assert len(m.boundary_loops[0]) == 4
    assert m.area == pytest.approx(1.0)


def test_obj_quad_face_rejected(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="non-triangle face"):
        load_mesh(p)


def test_off_quad_face_rejected(tmp_path):
    p = tmp_path / "quad.off"
    p.write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(MeshError, match="non-triangle face"):
        load_mesh(p)


def test_parse_failure(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n4 2 0\n0 0 0\n1 zero 0\n")
    with pytest.raises(MeshError):
        load_mesh(p)


def test_non_manifold_edge_rejected():
    v = [[0, 0], [1, 0], [0, 1], [0, -1], [1, 1]]
    with pytest.raises(MeshError):
        TriMesh(v, [[0, 1, 2], [0, 1, 3], [1, 0, 4]])


def test_disconnected_rejected():
    v = [[0, 0], [1, 0], [0, 1], [3, 0], [4, 0], [3, 1]]
    with pytest.raises(MeshError, match="connected"):
        TriMesh(v, [[0, 1, 2], [3, 4, 5]])


def test_orientation_normalised():
    m = TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert np.all(m.triangle_areas > 0)


def test_disk_264_nodes_roundtrip(tmp_path):
    # the smallest disk discretisation of the method comparison table has 264 nodes
    m = domains.disk(0.1205)
    assert m.n_vertices == 264
    write_off(m, tmp_path / "disk.off")
    write_obj(m, tmp_path / "disk.obj")
    for name in ("disk.off", "disk.obj"):
        back = load_mesh(tmp_path / name)
        assert back.n_vertices == 264
        assert np.array_equal(back.triangles, m.triangles)


def test_hole_loops_clockwise():
    m = domains.two_hole(0.2)
    outer = [lp for lp in m.boundary_loops if lp.is_outer]
    assert len(outer) == 1 and len(m.boundary_loops) == 3
    assert m.euler_characteristic == -1


def test_refine_uniform_preserves_geometry():
    m = domains.hexagon(0.3)
    r = refine_uniform(m)
    assert r.n_triangles == 4 * m.n_triangles
    assert r.area == pytest.approx(m.area, rel=1e-12)
    assert np.array_equal(r.vertices[: m.n_vertices], m.vertices)


# -- corners -----------------------------------------------------------------------


def test_square_corners():
    m = domains.square(0.2)
    cs = detect_corners(m, angle_tol=0.1)
    assert len(cs) == 4
    for c in cs:
        assert c.interior_angle == pytest.approx(math.pi / 2)
        assert c.index_quarters == 1


def test_disk_has_no_corners():
    assert detect_corners(domains.disk(0.1), angle_tol=0.3) == []


def test_lshape_reentrant_corner():
    cs = detect_corners(domains.lshape(0.25))
    reentrant = [c for c in cs if c.interior_angle > math.pi]
    assert len(reentrant) == 1
    assert reentrant[0].interior_angle == pytest.approx(1.5 * math.pi)
    assert reentrant[0].index_quarters == -1


def test_corner_index_rule_table():
    # k = round(2 (pi - theta) / pi), ties upward, before clamping
    assert corner_quarters_for_angle(math.pi / 2) == 1
    assert corner_quarters_for_angle(math.pi) == 0
    assert corner_quarters_for_angle(1.5 * math.pi) == -1
    assert corner_quarters_for_angle(0.75 * math.pi) == 1
    assert corner_quarters_for_angle(0.2) == 2


def test_sharp_corner_clamped(caplog):
    m = TriMesh([[0, 0], [1, 0], [0.05, 0.3]], [[0, 1, 2]])
    cs = detect_corners(m)
    sharp = [c for c in cs if c.interior_angle < 0.5]
    assert sharp and all(c.index_quarters == 1 for c in sharp)
    assert "clamped" in caplog.text


def test_corner_overrides(tmp_path):
    m = domains.square(0.25)
    cs = detect_corners(m)
    vid = cs[0].vertex_id
    p = tmp_path / "corners.txt"
    p.write_text(f"{vid} 0\n")
    over = load_corner_overrides(p)
    cs2 = detect_corners(m, overrides=over)
    c = [c for c in cs2 if c.vertex_id == vid][0]
    assert c.index_quarters == 0 and c.user_override == 0
    with pytest.raises(MeshError):
        detect_corners(m, overrides={int(m.interior_nodes[0]): 1})


# -- boundary data ---------------------------------------------------------------------


def test_circle_boundary_data_is_normal_to_the_fourth():
    m, cs, bc = domain("disk", 0.1)
    theta = np.arctan2(*m.vertices[bc.nodes][:, ::-1].T)
    err = np.abs(np.angle(bc.values * np.exp(-4j * theta)))
    assert err.max() < 4 * math.pi / 180


def test_square_side_midpoint_value():
    m, cs, bc = domain("square", 0.1)
    xy = m.vertices[bc.nodes]
    mid = np.argmin(np.hypot(xy[:, 0] - 0.5, xy[:, 1]))
    assert abs(bc.values[mid] - 1.0) < 1e-12


def test_half_disk_corner_bisector():
    m = domains.half_disk(0.1)
    vid = int(np.argmin(np.hypot(m.vertices[:, 0] - 1.0, m.vertices[:, 1])))
    assert m.vertices[vid] == pytest.approx([1.0, 0.0])
    # arc normal e^{i0}, flat side normal e^{-i pi/2}; the first arc facet tilts by about h/2
    assert abs(bisector_value(m, vid) - (-1.0)) < 4 * 0.05


def test_boundary_data_unit_modulus():
    for name in ("square", "lshape", "block_u", "two_hole"):
        _, _, bc = domain(name, 0.1)
        assert np.allclose(np.abs(bc.values), 1.0, atol=1e-15)


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError, match="degenerate"):
        TriMesh([[0, 0], [1, 0], [2, 0], [0, 1]], [[0, 1, 2], [0, 2, 3]])


# -- Brouwer degree ------------------------------------------------------------------


def test_circle_degree_four():
    m, _, bc = domain("disk", 0.1)
    assert brouwer_degree(bc, m.boundary_loops[0]) == 4
    assert effective_degree(m, bc) == 4


def test_constant_data_degree_zero():
    m = domains.disk(0.2)
    nodes = m.boundary_nodes
    bc = BoundaryCondition(nodes, np.ones(len(nodes), dtype=complex))
    assert brouwer_degree(bc, m.boundary_loops[0]) == 0


def test_square_degree_and_budget():
    m, cs, bc = domain("square", 0.1)
    assert brouwer_degree(bc, m.boundary_loops[0]) == 4
    assert effective_degree(m, bc) == 0
    assert index_budget(m, cs) == 0


def test_reversal_negates_degree():
    for name in ("disk", "square", "lshape", "hexagon"):
        m, _, bc = domain(name, 0.1)
        lp = m.boundary_loops[0]
        assert brouwer_degree(bc, lp, reverse=True) == -brouwer_degree(bc, lp)


def test_antipodal_values_rejected():
    m = domains.square(0.5)
    nodes = m.boundary_nodes
    vals = np.where(np.arange(len(nodes)) % 2 == 0, 1.0, -1.0).astype(complex)
    with pytest.raises(ValueError, match="antipodal"):
        loop_winding(BoundaryCondition(nodes, vals), m.boundary_loops[0])


def test_poincare_hopf_budget_simply_connected():
    for name in ("square", "disk", "half_disk", "hexagon", "lshape", "block_u", "mushroom"):
        m, cs, bc = domain(name, 0.1)
        assert index_budget(m, cs) * 4 == effective_degree(m, bc)


def test_poincare_hopf_budget_with_holes():
    for name in ("two_hole", "square_with_hole", "drop_with_hole"):
        m, cs, bc = domain(name, 0.1)
        assert index_budget(m, cs) * 4 == effective_degree(m, bc)


@settings(max_examples=40, deadline=None)
@given(turns=st.integers(-6, 6), amp=st.floats(0.0, 1.2), phase=st.floats(0, 2 * math.pi))
def test_winding_is_exact_integer(turns, amp, phase):
    m = domains.disk(0.15)
    lp = m.boundary_loops[0]
    ids = np.array(lp.vertex_ids)
    theta = np.arctan2(m.vertices[ids, 1], m.vertices[ids, 0])
    vals = np.exp(1j * (turns * theta + amp * np.sin(3 * theta + phase)))
    order = np.argsort(ids)
    bc = BoundaryCondition(ids[order], vals[order])
    assert loop_winding(bc, lp) == turns
    assert loop_winding(bc, lp, reverse=True) == -turns


@settings(max_examples=15, deadline=None)
@given(k=st.sampled_from([(0, 1), (1, 0), (1, -1), (-1, 1), (0, 0)]))
def test_override_changes_degree_by_quarters(k):
    m = domains.square(0.25)
    cs = detect_corners(m)
    over = {cs[0].vertex_id: k[0], cs[1].vertex_id: k[1]}
    m2, cs2, bc2 = prepare(m, over)
    assert brouwer_degree(bc2, m2.boundary_loops[0]) == 4
    assert index_budget(m2, cs2) * 4 == effective_degree(m2, bc2)
