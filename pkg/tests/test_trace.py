import math

import numpy as np
import pytest

from conftest import HEX_CENTER, domain, limit_cycle_pipeline, mbo_field, mbo_pipeline, prescribed_field
from glcross import crossfield as cf
from glcross import domains, gl
from glcross import trace as tr


def _dist_to_polyline(p, pts):
    a, b = pts[:-1], pts[1:]
    ab = b - a
    L2 = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / L2, 0, 1)
    return float(np.min(np.hypot(*(a + t[:, None] * ab - p).T)))


@pytest.fixture(scope="module")
def constant_square():
    m = domains.square(0.1)
    return gl.RepresentationField(m, np.ones(m.n_vertices))


def test_trace_params_defaults():
    m = domains.square(0.1)
    p = tr.TraceParams().resolved(m)
    assert p.step == pytest.approx(0.25 * m.mean_edge_length)
    assert p.snap_radius == pytest.approx(1.5 * m.mean_edge_length)
    with pytest.raises(ValueError):
        tr.TraceParams(step=-1.0).resolved(m)


def test_constant_field_straight_exit(constant_square):
    st = tr.trace_streamline(constant_square, (0.5, 0.5), (1, 0))
    assert st.termination.kind == "boundary"
    assert st.points[-1] == pytest.approx([1.0, 0.5], abs=1e-12)
    assert np.abs(st.points[:, 1] - 0.5).max() < 1e-12
    assert st.length == pytest.approx(0.5, abs=1e-12)


def test_branch_closest_to_dir0_is_followed(constant_square):
    st = tr.trace_streamline(constant_square, (0.5, 0.5), (0.2, -1))
    assert st.points[-1] == pytest.approx([0.5, 0.0], abs=1e-12)


def test_ambiguous_and_invalid_starts(constant_square):
    with pytest.raises(tr.TracingError, match="ambiguous"):
        tr.trace_streamline(constant_square, (0.5, 0.5), (1, 1))
    with pytest.raises(tr.TracingError, match="outside"):
        tr.trace_streamline(constant_square, (1.5, 0.5), (1, 0))
    with pytest.raises(tr.TracingError, match="zero"):
        tr.trace_streamline(constant_square, (0.5, 0.5), (0, 0))


def test_circular_field_closes_into_limit_cycle():
    m = domains.annulus(0.08)
    z = m.vertices[:, 0] + 1j * m.vertices[:, 1]
    rep = gl.RepresentationField(m, (z / np.abs(z)) ** 4)
    st = tr.trace_streamline(rep, (0.7, 0.0), (0, 1))
    assert st.termination.kind == "limit_cycle"
    r = np.hypot(*st.points.T)
    assert np.abs(r - 0.7).max() < 1e-3
    assert st.length == pytest.approx(2 * math.pi * 0.7, rel=0.05)


def test_streamline_aimed_at_vortex_ends_there():
    m = domains.disk(0.1)
    z = m.vertices[:, 0] + 1j * m.vertices[:, 1]
    a = 0.013 + 0.007j
    rep = gl.RepresentationField(m, (z - a) / np.abs(z - a))
    sings = cf.detect_singularities(rep)
    # radial rays at angles 2 pi k / 3 are field lines of this vortex
    e = np.exp(2j * math.pi / 3)
    p = a + 0.5 * e
    st = tr.trace_streamline(rep, (p.real, p.imag), (-e.real, -e.imag), singularities=sings)
    assert st.termination.kind == "singularity" and st.termination.singularity == 0
    assert math.dist(st.points[-1], (a.real, a.imag)) < 2 * m.mean_edge_length


@pytest.mark.parametrize("start, d0", [((0.0, -0.85), (1, 0.3)), ((0.3, 0.3), (1, 0.2)), ((0.0, 0.0), (1, 0.2))])
def test_branch_continuity_and_reversibility(start, d0):
    rep = mbo_field("disk", 0.1).field
    sings = cf.detect_singularities(rep)
    st = tr.trace_streamline(rep, start, d0, singularities=sings)
    assert st.turning_angles().max() < math.pi / 4
    q = st.points[-8]
    back = tr.trace_streamline(rep, q, st.points[-9] - q, singularities=sings)
    assert _dist_to_polyline(np.asarray(start), back.points) < 0.05 * rep.mesh.mean_edge_length


# -- separatrices -------------------------------------------------------------------------


def test_square_has_no_separatrices():
    m, corners, _ = domain("square", 0.1)
    rep = mbo_field("square", 0.1).field
    assert tr.trace_separatrices(rep, [], corners) == ([], [], [])


def test_hexagon_center_six_evenly_spaced():
    m, corners, _ = domain("hexagon", 0.1)
    rep = prescribed_field("hexagon", 0.1, *HEX_CENTER)
    sings = cf.detect_singularities(rep)
    S, P, L = tr.trace_separatrices(rep, sings, corners)
    assert P == [] and L == []
    assert len(S) == 6
    starts = [st.points[1] - st.points[0] for st in S]
    ang = np.sort(np.arctan2([d[1] for d in starts], [d[0] for d in starts]))
    assert np.allclose(np.diff(ang), math.pi / 3, atol=1e-9)
    for st in S:
        assert st.termination.kind in ("boundary", "corner")


def test_corner_separatrices_on_reentrant_corner():
    m, corners, _ = domain("lshape", 0.1)
    rep = mbo_field("lshape", 0.1).field
    S, P, L = tr.trace_separatrices(rep, cf.detect_singularities(rep), corners)
    reentrant = [i for i, c in enumerate(corners) if c.index_quarters == -1]
    from_corner = [st for st in S if st.origin[:2] == ("corner", reentrant[0])]
    assert len(from_corner) == 2


def test_duplicates_are_tagged():
    pl = mbo_pipeline("disk", 0.1)
    dup = [st for st in pl.S if st.duplicate_of is not None]
    for st in dup:
        assert pl.S[st.duplicate_of].termination.kind in ("singularity", "corner")
    assert len(pl.result.B) == len(pl.S) - len(dup)


def test_limit_cycle_example_separatrices():
    pl = limit_cycle_pipeline()
    assert len(pl.P) >= 1 and len(pl.L) >= 1
    cyc = pl.L[0]
    r = np.hypot(*cyc.T)
    # a closed orbit strictly between the two boundary circles
    assert 0.35 < r.min() and r.max() < 0.9


# -- partition -------------------------------------------------------------------------------


def test_partition_without_cycles_keeps_separatrices():
    pl = mbo_pipeline("disk", 0.1)
    assert pl.P == [] and pl.L == []
    res = tr.partition(pl.rep, pl.S, [], [])
    assert res.t_junctions == []
    originals = [st for st in pl.S if st.duplicate_of is None]
    assert len(res.B) == len(originals)
    for b, st in zip(res.B, originals):
        assert np.array_equal(b["points"], st.points)


def test_partition_hand_built_cycle():
    m = domains.disk(0.1)
    rep = gl.RepresentationField(m, np.ones(m.n_vertices))
    t = np.linspace(0, 2 * math.pi, 200, endpoint=False)
    cyc = 0.5 * np.column_stack([np.cos(t), np.sin(t)])
    p1 = tr.Streamline(np.column_stack([np.linspace(-0.95, -0.45, 41), np.full(41, 0.02)]), np.array([1.0, 0.0]),
                       origin=("singularity", 0, 0), termination=tr.Termination("limit_cycle"))
    p2 = tr.Streamline(np.column_stack([np.full(41, 0.03), np.linspace(-0.95, 0.95, 41)]), np.array([0.0, 1.0]),
                       origin=("singularity", 0, 1), termination=tr.Termination("limit_cycle"))
    res = tr.partition(rep, [], [p1, p2], [cyc])
    kinds = [b["kind"] for b in res.B]
    assert kinds == ["limit_cycle", "separatrix", "separatrix"]
    assert len(res.t_junctions) == 2
    # first cut lands on the cycle, second on the first accepted curve it meets
    assert res.t_junctions[0].host_curve == 0
    assert np.hypot(*res.t_junctions[0].point) == pytest.approx(0.5, abs=0.01)
    assert res.B[1]["points"][-1][0] == pytest.approx(-0.5, abs=0.01)


def test_partition_limit_cycle_example():
    pl = limit_cycle_pipeline()
    assert len(pl.result.t_junctions) == len(pl.P) >= 1
    # separatrices of the vortex pair cross the orbit, so it is not accepted as a cut
    assert not any(b["kind"] == "limit_cycle" for b in pl.result.B)
    onto = [tj for tj in pl.result.t_junctions if tj.host_curve is None]
    assert len(onto) == sum(st.onto_boundary for st in pl.P) and all(tj.edge for tj in onto)


def test_partition_requires_a_reaching_separatrix():
    m = domains.disk(0.1)
    rep = gl.RepresentationField(m, np.ones(m.n_vertices))
    t = np.linspace(0, 2 * math.pi, 100, endpoint=False)
    cyc = 0.5 * np.column_stack([np.cos(t), np.sin(t)])
    far = tr.Streamline(np.array([[0.8, 0.0], [0.9, 0.0]]), np.array([1.0, 0.0]), termination=tr.Termination("limit_cycle"))
    with pytest.raises(tr.PartitionError):
        tr.partition(rep, [], [far], [cyc])
