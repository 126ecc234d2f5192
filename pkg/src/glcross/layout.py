"""Quad layouts: planar arrangement of the accepted curves, region checks,
structured grids inside four-sided regions, and JSON/SVG export.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .crossfield import boundary_separatrix_directions
from .mesh import point_in_polygon, polygon_area
from .trace import SegmentIndex

log = logging.getLogger(__name__)

NODE_PRIORITY = {"singularity": 0, "corner": 1, "t-junction": 2, "boundary-exit": 3, "curve-intersection": 4, "anchor": 5}


class LayoutError(ValueError):
    pass


@dataclass
class LayoutNode:
    id: int
    kind: str
    x: float
    y: float
    degree: int | None = None  # representation degree at singularity nodes
    corner_angle: float | None = None  # interior angle at domain corners
    corner_quarters: int | None = None
    on_boundary: bool = False
    exits: list | None = None  # known separatrix directions at singular nodes

    def to_json(self):
        out = {"id": self.id, "kind": self.kind, "x": self.x, "y": self.y}
        for key in ("degree", "corner_angle", "corner_quarters", "exits"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.on_boundary:
            out["on_boundary"] = True
        return out


@dataclass
class LayoutArc:
    id: int  # 1-based so that signed ids work
    src: int
    dst: int
    polyline: np.ndarray
    source: str = ""

    def to_json(self):
        return {"id": self.id, "src": self.src, "dst": self.dst, "source": self.source,
                "polyline": [[float(x), float(y)] for x, y in self.polyline]}


@dataclass
class LayoutFace:
    id: int
    cycles: list  # lists of signed arc ids
    kind: str = "unclassified"
    corners: list = field(default_factory=list)  # corner node ids, outer cycle order
    t_junction: bool = False

    @property
    def arcs(self):
        return [a for c in self.cycles for a in c]

    def to_json(self):
        return {"id": self.id, "arcs": self.arcs, "cycles": self.cycles, "kind": self.kind,
                "corners": self.corners, "t_junction": self.t_junction}


@dataclass
class QuadLayout:
    nodes: list
    arcs: list
    faces: list
    t_junctions: list
    hole_faces: int = 0
    components: int = 1
    scale: float = 0.0  # mean mesh edge length

    def arc(self, signed):
        return self.arcs[abs(signed) - 1]

    def half_edge_points(self, signed):
        a = self.arc(signed)
        return a.polyline if signed > 0 else a.polyline[::-1]

    def half_edge_ends(self, signed):
        a = self.arc(signed)
        return (a.src, a.dst) if signed > 0 else (a.dst, a.src)

    def cycle_polygon(self, cycle):
        pts = [self.half_edge_points(s)[:-1] for s in cycle]
        return np.vstack(pts)

    def euler_characteristic_check(self):
        """``(V - E + F_all, 1 + components)``; F_all counts holes and the outer face."""
        v, e = len(self.nodes), len(self.arcs)
        f = len(self.faces) + self.hole_faces + 1
        return v - e + f, 1 + self.components

    def to_json(self):
        return {
            "nodes": [n.to_json() for n in self.nodes],
            "arcs": [a.to_json() for a in self.arcs],
            "faces": [f.to_json() for f in self.faces],
            "t_junctions": list(self.t_junctions),
            "hole_faces": self.hole_faces,
            "components": self.components,
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, data):
        nodes = [LayoutNode(n["id"], n["kind"], float(n["x"]), float(n["y"]), n.get("degree"),
                            n.get("corner_angle"), n.get("corner_quarters"), bool(n.get("on_boundary", False)),
                            n.get("exits"))
                 for n in data["nodes"]]
        arcs = [LayoutArc(a["id"], a["src"], a["dst"], np.asarray(a["polyline"], dtype=float), a.get("source", ""))
                for a in data["arcs"]]
        faces = [LayoutFace(f["id"], f.get("cycles") or [f["arcs"]], f.get("kind", "unclassified"),
                            list(f.get("corners", [])), bool(f.get("t_junction", False)))
                 for f in data["faces"]]
        return cls(nodes, arcs, faces, list(data.get("t_junctions", [])),
                   int(data.get("hole_faces", 0)), int(data.get("components", 1)), float(data.get("scale", 0.0)))


# -- arrangement ----------------------------------------------------------------


class _NodeTable:
    def __init__(self, tol):
        self.tol = tol
        self.nodes = []
        self.grid = {}

    def _key(self, x, y):
        c = 10 * self.tol
        return int(math.floor(x / c)), int(math.floor(y / c))

    def find(self, x, y):
        kx, ky = self._key(x, y)
        for i in range(kx - 1, kx + 2):
            for j in range(ky - 1, ky + 2):
                for nid in self.grid.get((i, j), ()):
                    n = self.nodes[nid]
                    if math.hypot(n.x - x, n.y - y) <= self.tol:
                        return nid
        return None

    def get(self, x, y, kind, **extra):
        nid = self.find(x, y)
        if nid is not None:
            n = self.nodes[nid]
            if NODE_PRIORITY[kind] < NODE_PRIORITY[n.kind]:
                n.kind = kind
            for k, v in extra.items():
                if v is not None and getattr(n, k) in (None, False):
                    setattr(n, k, v)
            return nid
        nid = len(self.nodes)
        self.nodes.append(LayoutNode(nid, kind, float(x), float(y), **extra))
        self.grid.setdefault(self._key(x, y), []).append(nid)
        return nid


def _loop_position(loop_ids, a, b, s):
    """(segment index, t) of a point on boundary edge (a, b) at parameter s from a."""
    n = len(loop_ids)
    pos = {v: i for i, v in enumerate(loop_ids)}
    i, j = pos.get(a), pos.get(b)
    if i is None or j is None:
        return None
    if (i + 1) % n == j:
        return i, s
    if (j + 1) % n == i:
        return j, 1.0 - s
    return None


def build_layout(mesh, result, corners=(), singularities=(), rep=None, tol=None):
    """Planar arrangement of the accepted curves and the domain boundary.

    Nodes are placed at curve endpoints, domain corners, boundary exits,
    T-junctions and any remaining crossings; faces are traced by always
    taking the next half-edge clockwise from the reversed arrival (the
    face lies on the left).  With ``rep`` the faces are also classified.
    """
    tol = tol if tol is not None else 1e-8 * mesh.diameter
    table = _NodeTable(tol)
    curves = []  # dicts: points, closed, source, cuts [(seg, t, node)]

    for s in singularities:
        table.get(s.location[0], s.location[1], "singularity", degree=int(s.rep_degree),
                  exits=[float(a) for a in s.exit_directions] or None)
    corner_by_vid = {c.vertex_id: c for c in corners}

    for li, lp in enumerate(mesh.boundary_loops):
        ids = list(lp.vertex_ids)
        cuts = []
        for k, vid in enumerate(ids):
            c = corner_by_vid.get(vid)
            if c is not None:
                x, y = mesh.vertices[vid]
                exits = (boundary_separatrix_directions(c).exit_directions if c.index_quarters < 2 else None)
                nid = table.get(x, y, "corner", corner_angle=float(c.interior_angle),
                                corner_quarters=int(c.index_quarters), on_boundary=True, exits=exits)
                cuts.append((k, 0.0, nid))
        curves.append({"points": mesh.vertices[ids], "closed": True, "source": f"boundary:{li}",
                       "cuts": cuts, "loop": ids})

    n_bnd = len(curves)
    for b in result.B:
        pts = np.asarray(b["points"], dtype=float)
        if b["closed"] and len(pts) > 2 and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        cuts = []
        if not b["closed"]:
            kind0 = "singularity" if b["source"] and b["source"][0] == "singularity" else "corner"
            cuts.append((0, 0.0, table.get(pts[0, 0], pts[0, 1], kind0)))
            term = b.get("termination")
            tk = term.kind if term is not None else None
            if tk == "hit_curve" and term.curve is None and term.edge is not None:
                tk = "boundary"
            end_kind = {"singularity": "singularity", "corner": "corner", "boundary": "boundary-exit",
                        "hit_curve": "t-junction"}.get(tk, "curve-intersection")
            if term is not None and term.kind == "hit_curve":
                end_kind = "t-junction"
            nid = table.get(pts[-1, 0], pts[-1, 1], end_kind, on_boundary=tk in ("boundary", "corner") or None)
            cuts.append((len(pts) - 2, 1.0, nid))
            if tk == "boundary" and term.edge is not None:
                for li in range(n_bnd):
                    pos = _loop_position(curves[li]["loop"], term.edge[0], term.edge[1], term.param)
                    if pos is not None:
                        curves[li]["cuts"].append((pos[0], pos[1], nid))
                        break
        curves.append({"points": pts, "closed": bool(b["closed"]), "source": f"curve:{b['id']}",
                       "cuts": cuts, "bid": b["id"]})

    bid_to_curve = {c["bid"]: i for i, c in enumerate(curves) if "bid" in c}
    tj_nodes = []
    for tj in result.t_junctions:
        nid = table.get(tj.point[0], tj.point[1], "t-junction")
        if tj.host_curve is None:
            # hosted by a boundary loop; the cut was placed with the curve's termination
            tj_nodes.append((nid, tj.cut_curve, None))
            continue
        host = curves[bid_to_curve[tj.host_curve]]
        host["cuts"].append((tj.host_segment, tj.host_param, nid))
        tj_nodes.append((nid, tj.cut_curve, tj.host_curve))

    _add_crossings(curves, table, tol, mesh.mean_edge_length)

    # split curves into arcs
    arcs = []
    for ci, c in enumerate(curves):
        pts = c["points"]
        npts = len(pts)
        nseg = npts if c["closed"] else npts - 1
        cuts = sorted(set((int(s), float(t), int(n)) for s, t, n in c["cuts"]), key=lambda r: (r[0], r[1]))
        if not cuts:
            if not c["closed"]:
                continue
            cuts = [(0, 0.0, table.get(pts[0, 0], pts[0, 1], "anchor", on_boundary=ci < n_bnd or None))]
        # drop repeated consecutive nodes at the same place
        uniq = []
        for r in cuts:
            if uniq and uniq[-1][2] == r[2] and _param_gap(pts, uniq[-1], r, c["closed"]) < tol:
                continue
            uniq.append(r)
        cuts = uniq

        def point_at(seg, t):
            a = pts[seg % npts]
            b = pts[(seg + 1) % npts]
            return a + t * (b - a)

        pairs = list(zip(cuts[:-1], cuts[1:]))
        if c["closed"]:
            pairs.append((cuts[-1], (cuts[0][0] + nseg, cuts[0][1], cuts[0][2])))
        for (s0, t0, n0), (s1, t1, n1) in pairs:
            poly = [table.nodes[n0].x, table.nodes[n0].y]
            seq = [np.array(poly)]
            for k in range(s0 + 1, s1 + 1):
                if k == s1 and t1 == 0.0:
                    break
                seq.append(pts[k % npts])
            seq.append(np.array([table.nodes[n1].x, table.nodes[n1].y]))
            seq = _dedupe(np.array(seq), tol)
            if len(seq) < 2 or (n0 == n1 and _length(seq) < 10 * tol):
                continue
            arcs.append(LayoutArc(len(arcs) + 1, n0, n1, seq, c["source"]))

    layout = _faces(mesh, table.nodes, arcs, tol)
    arc_of_curve = {}
    for a in layout.arcs:
        arc_of_curve.setdefault(a.source, []).append(a)
    for nid, cut_cid, host_cid in tj_nodes:
        cut_arc = next((a.id for a in arc_of_curve.get(f"curve:{cut_cid}", []) if nid in (a.src, a.dst)), None)
        host_src = [a for k, arcs_k in arc_of_curve.items() if k.startswith("boundary:") for a in arcs_k] \
            if host_cid is None else arc_of_curve.get(f"curve:{host_cid}", [])
        host_arc = next((a.id for a in host_src if nid in (a.src, a.dst)), None)
        layout.t_junctions.append({"node": nid, "cut_arc": cut_arc, "host_arc": host_arc})
    tj_set = {t["node"] for t in layout.t_junctions}
    for f in layout.faces:
        f.t_junction = any(layout.half_edge_ends(s)[0] in tj_set for c in f.cycles for s in c)
    classify_faces(layout, rep, mesh)
    return layout


def _param_gap(pts, r0, r1, closed):
    a = pts[r0[0] % len(pts)] + r0[1] * (pts[(r0[0] + 1) % len(pts)] - pts[r0[0] % len(pts)])
    b = pts[r1[0] % len(pts)] + r1[1] * (pts[(r1[0] + 1) % len(pts)] - pts[r1[0] % len(pts)])
    if r0[0] == r1[0]:
        return float(np.hypot(*(a - b)))
    return float("inf")


def _dedupe(seq, tol):
    keep = [0]
    for i in range(1, len(seq)):
        if np.hypot(*(seq[i] - seq[keep[-1]])) > tol:
            keep.append(i)
    if keep[-1] != len(seq) - 1:
        keep[-1] = len(seq) - 1
    return seq[keep]


def _length(pts):
    d = np.diff(pts, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _add_crossings(curves, table, tol, h):
    """Node any crossing between distinct curves that is not already a node."""
    index = SegmentIndex(2 * h)
    for ci, c in enumerate(curves):
        index.add(ci, c["points"], c["closed"])
    for ci, c in enumerate(curves):
        pts = c["points"]
        n = len(pts)
        nseg = n if c["closed"] else n - 1
        for i in range(nseg):
            p, q = pts[i], pts[(i + 1) % n]
            for t, pt, cj, sj, s in index.query(p, q, tol=1e-9):
                if cj <= ci:
                    continue
                nid = table.find(pt[0], pt[1])
                if nid is None:
                    nid = table.get(pt[0], pt[1], "curve-intersection")
                c["cuts"].append((i, min(max(t, 0.0), 1.0), nid))
                curves[cj]["cuts"].append((sj, min(max(s, 0.0), 1.0), nid))


def _faces(mesh, nodes, arcs, tol):
    # half-edges: +id forward, -id backward
    out = {n.id: [] for n in nodes}
    for a in arcs:
        out[a.src].append(a.id)
        out[a.dst].append(-a.id)

    def he_points(s):
        a = arcs[abs(s) - 1]
        return a.polyline if s > 0 else a.polyline[::-1]

    def he_angle(s):
        p = he_points(s)
        d = p[1] - p[0]
        return math.atan2(d[1], d[0])

    def he_dst(s):
        a = arcs[abs(s) - 1]
        return a.dst if s > 0 else a.src

    order = {nid: sorted(hs, key=he_angle) for nid, hs in out.items()}
    visited = set()
    cycles = []
    for a in arcs:
        for s in (a.id, -a.id):
            if s in visited:
                continue
            cyc = []
            cur = s
            while cur not in visited:
                visited.add(cur)
                cyc.append(cur)
                v = he_dst(cur)
                ring = order[v]
                k = ring.index(-cur)
                cur = ring[k - 1]
            cycles.append(cyc)

    def polygon(cyc):
        return np.vstack([he_points(s)[:-1] for s in cyc])

    def left_probe(s):
        p = he_points(s)
        seg = np.argmax(np.hypot(*np.diff(p, axis=0).T))
        a, b = p[seg], p[seg + 1]
        d = b - a
        nrm = np.array([-d[1], d[0]]) / np.hypot(*d)
        eps = min(1e-3 * mesh.mean_edge_length, 0.25 * np.hypot(*d))
        return 0.5 * (a + b) + eps * nrm

    pos, neg = [], []
    for cyc in cycles:
        poly = polygon(cyc)
        area = polygon_area(poly) if len(poly) >= 3 else 0.0
        (pos if area > 0 else neg).append((cyc, poly, abs(area)))

    faces, hole_faces = [], 0
    domain_pos = []
    for cyc, poly, area in pos:
        probe = left_probe(cyc[0])
        if mesh.locate(probe, tol=1e-9)[0] >= 0:
            domain_pos.append((cyc, poly, area))
        else:
            hole_faces += 1
    domain_pos.sort(key=lambda r: r[2])
    holes = {i: [] for i in range(len(domain_pos))}
    for cyc, poly, area in neg:
        probe = left_probe(cyc[0])
        owner = None
        for i, (_, fpoly, _) in enumerate(domain_pos):
            if point_in_polygon(probe, fpoly):
                owner = i
                break
        if owner is not None:
            holes[owner].append(cyc)
    for i, (cyc, poly, area) in enumerate(domain_pos):
        faces.append(LayoutFace(i, [list(cyc)] + [list(h) for h in holes[i]]))

    # components of the node/arc graph
    parent = list(range(len(nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in arcs:
        parent[find(a.src)] = find(a.dst)
    comps = len({find(n.id) for n in nodes})
    return QuadLayout(list(nodes), arcs, faces, [], hole_faces, comps, float(mesh.mean_edge_length))


# -- classification -----------------------------------------------------------------


@dataclass
class NodeSector:
    node: int
    opening: float
    delta_arg: float
    alpha: float  # opening in the cross frame
    index: float
    role: str  # corner | straight | bad


@dataclass
class FaceReport:
    face: int
    kind: str
    n_corners: int
    n_cycles: int
    sectors: list
    index_sum: Fraction
    violations: list


@dataclass
class RegionReport:
    faces: list
    violations: list
    euler: tuple

    @property
    def counts(self):
        out = {}
        for f in self.faces:
            out[f.kind] = out.get(f.kind, 0) + 1
        return out

    @property
    def valid_fraction(self):
        if not self.faces:
            return 0.0
        return sum(f.kind in ("quad", "annulus") for f in self.faces) / len(self.faces)

    @property
    def ok(self):
        return not self.violations

    def to_json(self):
        return {
            "ok": self.ok,
            "counts": self.counts,
            "euler": list(self.euler),
            "violations": self.violations,
            "faces": [
                {"face": f.face, "kind": f.kind, "corners": f.n_corners, "cycles": f.n_cycles,
                 "index_sum": str(f.index_sum),
                 "sector_indices": [round(s.index, 6) for s in f.sectors if s.role != "straight"],
                 "violations": f.violations}
                for f in self.faces
            ],
        }


def _sample_arg(rep, pts, r):
    """Field value at arc length ``r`` along ``pts``."""
    d = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    r = min(r, 0.5 * cum[-1])
    k = int(np.searchsorted(cum, r, side="right") - 1)
    k = min(k, len(d) - 1)
    t = (r - cum[k]) / d[k] if d[k] > 0 else 0.0
    p = pts[k] + t * (pts[k + 1] - pts[k])
    tri, bc = rep.mesh.locate(p, tol=1e-9)
    if tri < 0:
        return None
    return complex(bc @ rep.values[rep.mesh.triangles[tri]])


def _leave_angle(node, pts, probe):
    """Direction in which ``pts`` leaves ``node``.

    At singular nodes the traced curve ends with a snap jump, so the chord to
    the first point ``probe`` away is used and then replaced by the nearest
    known exit direction.
    """
    d = pts[1] - pts[0]
    if not node.exits:
        return math.atan2(d[1], d[0])
    dist = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
    far = np.flatnonzero(dist >= min(probe, 0.5 * dist.max()))
    if len(far):
        d = pts[far[0]] - pts[0]
    return _snap_exit(node, math.atan2(d[1], d[0]))


def _snap_exit(node, angle, tol=math.radians(30)):
    """Replace a traced direction by the nearest known exit at singular nodes."""
    if not node.exits:
        return angle
    gaps = [abs(math.remainder(angle - e, 2 * math.pi)) for e in node.exits]
    k = int(np.argmin(gaps))
    return node.exits[k] if gaps[k] < tol else angle


def _snap_cross(angle, u, tol=math.radians(30)):
    """Nearest direction of the cross ``u`` if within ``tol`` of ``angle``."""
    base = float(np.angle(u)) / 4.0
    k = round((angle - base) / (0.5 * math.pi))
    snapped = base + k * 0.5 * math.pi
    return snapped if abs(snapped - angle) < tol else angle


def node_sector(layout, he_in, he_out, rep=None, mesh=None, sector_tol=math.radians(5), straight_tol=math.radians(20)):
    """Sector index at the node between incoming half-edge ``he_in`` and ``he_out``."""
    pin = layout.half_edge_points(-he_in)  # leaves the node along the incoming arc
    pout = layout.half_edge_points(he_out)
    node = layout.nodes[layout.half_edge_ends(he_out)[0]]
    probe = 2.0 * layout.scale
    a_out = _leave_angle(node, pout, probe)
    a_back = _leave_angle(node, pin, probe)
    opening = (a_back - a_out) % (2 * math.pi)
    if opening < 1e-9:
        opening = 2 * math.pi
    if node.kind == "singularity" and node.degree is not None:
        delta = -node.degree * opening
    elif node.kind == "corner" and node.corner_angle is not None:
        phi_c = node.corner_angle
        R = 4 * (math.pi - phi_c) - 2 * math.pi * node.corner_quarters
        delta = R * opening / phi_c
    elif rep is not None:
        r = 1e-3 * rep.mesh.mean_edge_length  # the field is continuous at regular nodes
        u_out, u_in = _sample_arg(rep, pout, r), _sample_arg(rep, pin, r)
        if u_out is None or u_in is None or u_in == 0 or u_out == 0:
            delta = 0.0
        else:
            # facets of a curved boundary deviate from the field by O(h/R); snap to the cross
            a_out, a_back = _snap_cross(a_out, u_out), _snap_cross(a_back, u_in)
            opening = (a_back - a_out) % (2 * math.pi) or 2 * math.pi
            delta = -float(np.angle(u_in / u_out))
    else:
        delta = 0.0
    alpha = opening + delta / 4.0
    index = (math.pi - alpha) / (2 * math.pi)
    if abs(alpha - 0.5 * math.pi) <= sector_tol:
        role = "corner"
    elif abs(alpha - math.pi) <= straight_tol:
        role = "straight"
    else:
        role = "bad"
    return NodeSector(node.id, opening, delta, alpha, index, role)


def _face_report(layout, face, rep, sector_tol, straight_tol):
    sectors, violations = [], []
    corners = []
    for ci, cyc in enumerate(face.cycles):
        for k, he_out in enumerate(cyc):
            he_in = cyc[k - 1]
            sec = node_sector(layout, he_in, he_out, rep, None, sector_tol, straight_tol)
            sectors.append(sec)
            if sec.role == "corner" and ci == 0:
                corners.append(sec.node)
            elif sec.role == "corner":
                corners.append(sec.node)
            if sec.role == "bad":
                violations.append(f"face {face.id}: sector index {sec.index:.4f} at node {sec.node} is not 1/4")
    n_corners = sum(s.role == "corner" for s in sectors)
    nc = len(face.cycles)
    index_sum = Fraction(n_corners, 4)
    if face.t_junction:
        # exempt from the four-sided rule; meshing it needs extra irregular nodes
        return FaceReport(face.id, "t_junction", n_corners, nc, sectors, index_sum, []), corners
    if nc == 1 and n_corners == 4:
        kind = "quad"
    elif nc == 2 and n_corners == 0:
        kind = "annulus"
    else:
        kind = "invalid"
        violations.append(f"face {face.id}: non-quad region ({n_corners} corners, {nc} boundary cycles)")
    if kind != "invalid" and index_sum != Fraction(2 - nc):
        violations.append(f"face {face.id}: corner index sum {index_sum} != Euler characteristic {2 - nc}")
    return FaceReport(face.id, kind, n_corners, nc, sectors, index_sum, violations), corners


def classify_faces(layout, rep=None, mesh=None, sector_tol=math.radians(5), straight_tol=math.radians(20)):
    for f in layout.faces:
        rep_f, corners = _face_report(layout, f, rep, sector_tol, straight_tol)
        f.kind = rep_f.kind
        f.corners = corners


def validate_regions(layout, rep=None, sector_tol=math.radians(5), straight_tol=math.radians(20)):
    """Check every region: sector indices, corner count, index budget, Euler formula."""
    reports, violations = [], []
    for f in layout.faces:
        r, _ = _face_report(layout, f, rep, sector_tol, straight_tol)
        reports.append(r)
        violations.extend(r.violations)
    euler = layout.euler_characteristic_check()
    if euler[0] != euler[1]:
        violations.append(f"arrangement Euler formula fails: V - E + F = {euler[0]}, expected {euler[1]}")
    return RegionReport(reports, violations, euler)


# -- grids -------------------------------------------------------------------------------


@dataclass
class RegionGrid:
    face_id: int
    points: np.ndarray  # (m + 1, n + 1, 2)
    corners: list

    def cell_jacobians(self):
        """Cross products at the four corners of every cell, shape (m, n, 4)."""
        P = self.points
        p00, p10, p11, p01 = P[:-1, :-1], P[1:, :-1], P[1:, 1:], P[:-1, 1:]

        def cross(o, a, b):
            return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])

        return np.stack([cross(p00, p10, p01), cross(p10, p11, p00), cross(p11, p01, p10), cross(p01, p00, p11)], axis=-1)

    @property
    def valid(self):
        return bool(np.all(self.cell_jacobians() > 0))


def _resample(pts, s):
    d = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    cum /= cum[-1]
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def face_sides(layout, face):
    """The four sides (polylines) of a quad face, counterclockwise from its first corner."""
    cyc = face.cycles[0]
    starts = [layout.half_edge_ends(s)[0] for s in cyc]
    corner_pos = [i for i, n in enumerate(starts) if n in face.corners]
    if len(corner_pos) != 4:
        raise LayoutError(f"face {face.id} does not have four corners")
    sides = []
    for k in range(4):
        i0, i1 = corner_pos[k], corner_pos[(k + 1) % 4]
        idx = list(range(i0, i1)) if i1 > i0 else list(range(i0, len(cyc))) + list(range(0, i1))
        pts = [layout.half_edge_points(cyc[i])[:-1] for i in idx]
        last = layout.half_edge_points(cyc[idx[-1]])[-1:]
        sides.append(np.vstack(pts + [last]))
    return sides


def map_grid_into_region(layout, face_id, m, n):
    """Coons-patch grid of (m + 1) x (n + 1) points inside a quad face."""
    face = layout.faces[face_id]
    if face.t_junction or face.kind == "t_junction":
        raise LayoutError("T-junction region requires additional irregular nodes; it cannot take a regular grid")
    if face.kind != "quad":
        raise LayoutError(f"face {face_id} is {face.kind}, not a quad")
    if m < 1 or n < 1:
        raise ValueError("grid resolution must be positive")
    s0, s1, s2, s3 = face_sides(layout, face)
    s = np.linspace(0.0, 1.0, m + 1)
    t = np.linspace(0.0, 1.0, n + 1)
    bottom = _resample(s0, s)
    right = _resample(s1, t)
    top = _resample(s2[::-1], s)
    left = _resample(s3[::-1], t)
    c00, c10, c11, c01 = bottom[0], bottom[-1], top[-1], top[0]
    S, T = s[:, None, None], t[None, :, None]
    P = ((1 - T) * bottom[:, None, :] + T * top[:, None, :] + (1 - S) * left[None, :, :] + S * right[None, :, :]
         - ((1 - S) * (1 - T) * c00 + S * (1 - T) * c10 + S * T * c11 + (1 - S) * T * c01))
    return RegionGrid(face_id, P, list(face.corners))


def grid_resolution(layout, face, target):
    """Per-face (m, n) from mean opposite side lengths over ``target`` edge length."""
    sides = face_sides(layout, face)
    L = [_length(sd) for sd in sides]
    m = max(1, int(round(0.5 * (L[0] + L[2]) / target)))
    n = max(1, int(round(0.5 * (L[1] + L[3]) / target)))
    return m, n


# -- export ---------------------------------------------------------------------------------


def export_layout(layout, path):
    Path(path).write_text(json.dumps(layout.to_json(), indent=1, sort_keys=True))


def import_layout(path):
    return QuadLayout.from_json(json.loads(Path(path).read_text()))


def _fmt(v):
    return f"{v:.6f}".rstrip("0").rstrip(".") if v != 0 else "0"


def _path(pts, close=False):
    body = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
    return f"M {body}{' Z' if close else ''}"


def export_svg(mesh, rep, layout, path, options=None):
    """Deterministic SVG; 1 user unit = 1 domain unit (y axis flipped)."""
    opts = {"mesh": False, "separatrices": (), "streamlines": (), "singularities": (), "faces": True}
    opts.update(options or {})
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    pad = 0.05 * mesh.diameter
    w, hgt = hi - lo + 2 * pad
    sw = 0.004 * mesh.diameter
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(lo[0] - pad)} {_fmt(-hi[1] - pad)} {_fmt(w)} {_fmt(hgt)}">',
        '<g transform="scale(1,-1)">',
    ]
    if opts["mesh"]:
        out.append(f'<g id="mesh" fill="none" stroke="#cccccc" stroke-width="{_fmt(sw / 4)}">')
        for tri in mesh.triangles:
            out.append(f'<path d="{_path(mesh.vertices[tri], True)}"/>')
        out.append("</g>")
    if layout is not None and opts["faces"]:
        out.append('<g id="faces" stroke="none">')
        for f in layout.faces:
            d = " ".join(_path(layout.cycle_polygon(c), True) for c in f.cycles)
            color = {"quad": "#eef6ee", "annulus": "#eeeef8", "t_junction": "#fff3d6"}.get(f.kind, "#ffdddd")
            out.append(f'<path class="face {f.kind}" fill="{color}" fill-rule="evenodd" d="{d}"/>')
        out.append("</g>")
    out.append(f'<g id="boundary" fill="none" stroke="black" stroke-width="{_fmt(sw)}">')
    for poly in mesh.boundary_polylines():
        out.append(f'<path d="{_path(poly, True)}"/>')
    out.append("</g>")
    if opts["streamlines"]:
        out.append(f'<g id="streamlines" fill="none" stroke="#888888" stroke-width="{_fmt(sw / 2)}">')
        for st in opts["streamlines"]:
            out.append(f'<path d="{_path(getattr(st, "points", st))}"/>')
        out.append("</g>")
    if opts["separatrices"]:
        out.append(f'<g id="separatrices" fill="none" stroke="#3060c0" stroke-width="{_fmt(sw)}">')
        for st in opts["separatrices"]:
            out.append(f'<path class="separatrix" d="{_path(getattr(st, "points", st))}"/>')
        out.append("</g>")
    if layout is not None:
        out.append(f'<g id="layout" fill="none" stroke="#c03030" stroke-width="{_fmt(1.5 * sw)}">')
        for a in layout.arcs:
            out.append(f'<path class="arc" d="{_path(a.polyline)}"/>')
        out.append("</g>")
        out.append('<g id="corners" fill="black">')
        r = 3 * sw
        for nd in layout.nodes:
            if nd.kind == "corner":
                out.append(f'<rect class="corner" x="{_fmt(nd.x - r)}" y="{_fmt(nd.y - r)}" width="{_fmt(2 * r)}" height="{_fmt(2 * r)}"/>')
            elif nd.kind == "t-junction":
                out.append(f'<circle class="tjunction" cx="{_fmt(nd.x)}" cy="{_fmt(nd.y)}" r="{_fmt(r)}" fill="orange"/>')
        out.append("</g>")
    if opts["singularities"]:
        out.append('<g id="singularities">')
        r = 5 * sw
        for s in opts["singularities"]:
            color = "cyan" if s.rep_degree > 0 else "red"
            out.append(f'<circle class="singularity" cx="{_fmt(s.location[0])}" cy="{_fmt(s.location[1])}" '
                       f'r="{_fmt(r)}" fill="{color}" stroke="black" stroke-width="{_fmt(sw / 2)}"/>')
        out.append("</g>")
    out.append("</g>")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
