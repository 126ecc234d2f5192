"""Planar triangle meshes, boundary loops, corners and 4-aligned boundary data.

A :class:`TriMesh` is validated on construction: triangles are re-oriented
counterclockwise, edges must be manifold, the mesh must be connected, and the
boundary is split into closed loops (outer loop counterclockwise, holes
clockwise, so the domain always lies to the left of a loop).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)

DEFAULT_ANGLE_TOL = math.radians(20.0)


class MeshError(ValueError):
    """Raised for unreadable or invalid meshes."""


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class BoundaryLoop:
    vertex_ids: tuple[int, ...]
    corner_ids: tuple[int, ...] = ()
    is_outer: bool = True

    def __len__(self):
        return len(self.vertex_ids)


@dataclass(frozen=True)
class Corner:
    """A flagged boundary vertex.

    ``index_quarters`` is the corner index in units of 1/4.  ``out_angle`` is
    the direction of the boundary edge leaving the corner (loop order); the
    interior sector spans ``[out_angle, out_angle + interior_angle]``.
    """

    vertex_id: int
    interior_angle: float
    index_quarters: int
    user_override: int | None = None
    out_angle: float = 0.0
    loop: int = 0

    @property
    def index(self):
        from fractions import Fraction

        return Fraction(self.index_quarters, 4)


@dataclass(frozen=True)
class BoundaryCondition:
    """Unit complex boundary data g at every boundary vertex.

    ``corner_quarters`` maps corner vertex ids to the corner index (quarters)
    that the jump of g across that corner was built for.
    """

    nodes: np.ndarray
    values: np.ndarray
    corner_quarters: dict = field(default_factory=dict)

    def as_dict(self):
        return {int(i): complex(v) for i, v in zip(self.nodes, self.values)}

    def full(self, n, fill=0.0):
        out = np.full(n, fill, dtype=complex)
        out[self.nodes] = self.values
        return out

    def __getitem__(self, vid):
        pos = np.searchsorted(self.nodes, vid)
        if pos >= len(self.nodes) or self.nodes[pos] != vid:
            raise KeyError(vid)
        return self.values[pos]


class TriMesh:
    """Validated planar triangulation.

    Parameters
    ----------
    vertices : (n, 2) array_like
    triangles : (m, 3) array_like of int
    """

    def __init__(self, vertices, triangles, corner_ids=None):
        v = np.asarray(vertices, dtype=float)
        t = np.asarray(triangles)
        if v.ndim != 2 or v.shape[1] < 2:
            raise MeshError("vertices must be an (n, 2) array")
        v = np.ascontiguousarray(v[:, :2])
        if t.size == 0:
            raise MeshError("mesh has no triangles")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("non-triangle face")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        t = t.astype(np.int64)
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex")

        area2 = _signed_area2(v, t)
        t = t.copy()
        flip = area2 < 0
        t[flip] = t[flip][:, ::-1]
        area2 = np.abs(area2)
        if np.any(area2 <= 1e-14 * max(area2.mean(), 1e-300)):
            raise MeshError("degenerate (zero-area) triangle")

        used = np.zeros(len(v), dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshError(f"{np.count_nonzero(~used)} unreferenced vertices")

        self.vertices = v
        self.triangles = t
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self._build_topology()
        self.boundary_loops = self._extract_loops(corner_ids or ())

    # -- construction helpers -------------------------------------------------

    def _build_topology(self):
        t = self.triangles
        nv = len(self.vertices)
        heads = t[:, [1, 2, 0]].ravel()
        tails = t.ravel()
        key = tails * nv + heads
        order = np.argsort(key, kind="stable")
        skey = key[order]
        if np.any(skey[1:] == skey[:-1]):
            raise MeshError("non-manifold edge (duplicate oriented edge)")
        twin_key = heads * nv + tails
        pos = np.searchsorted(skey, twin_key)
        pos = np.clip(pos, 0, len(skey) - 1)
        has_twin = skey[pos] == twin_key
        twin = np.where(has_twin, order[pos], -1)

        # neighbours[f, j] = triangle across the edge opposite local vertex j
        he_face = np.repeat(np.arange(len(t)), 3)
        nb = np.where(twin >= 0, he_face[np.maximum(twin, 0)], -1).reshape(-1, 3)
        # half-edge local k goes from vertex k to k+1, opposite vertex (k+2)%3
        self.neighbors = nb[:, [1, 2, 0]]

        und = np.sort(np.stack([tails, heads], axis=1), axis=1)
        edges, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge")
        self.edges = edges
        self._bnd_tails = tails[~has_twin]
        self._bnd_heads = heads[~has_twin]

        adj = coo_matrix(
            (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(nv, nv)
        )
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise MeshError(f"disconnected mesh ({ncomp} components)")

    def _extract_loops(self, corner_ids):
        tails, heads = self._bnd_tails, self._bnd_heads
        if len(tails) == 0:
            raise MeshError("mesh has no boundary")
        nxt = {}
        for a, b in zip(tails.tolist(), heads.tolist()):
            if a in nxt:
                raise MeshError(f"non-manifold boundary vertex {a}")
            nxt[a] = b
        corner_set = set(int(c) for c in corner_ids)
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            ids = []
            cur = start
            while cur not in seen:
                seen.add(cur)
                ids.append(cur)
                cur = nxt[cur]
            if cur != start:
                raise MeshError("boundary is not a set of closed loops")
            if len(ids) < 3:
                raise MeshError("boundary loop with fewer than 3 vertices")
            loops.append(ids)
        areas = [polygon_area(self.vertices[ids]) for ids in loops]
        outer = int(np.argmax(areas))
        if areas[outer] <= 0:
            raise MeshError("no counterclockwise outer boundary loop")
        if sum(a > 0 for a in areas) != 1:
            raise MeshError("more than one outer boundary loop")
        result = [BoundaryLoop(tuple(loops[outer]), tuple(c for c in loops[outer] if c in corner_set), True)]
        for i, ids in enumerate(loops):
            if i != outer:
                result.append(BoundaryLoop(tuple(ids), tuple(c for c in ids if c in corner_set), False))
        return result

    # -- derived quantities ---------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def boundary_nodes(self):
        if not hasattr(self, "_bnodes"):
            self._bnodes = np.unique(np.concatenate([np.asarray(lp.vertex_ids) for lp in self.boundary_loops]))
        return self._bnodes

    @property
    def interior_nodes(self):
        if not hasattr(self, "_inodes"):
            mask = np.ones(self.n_vertices, dtype=bool)
            mask[self.boundary_nodes] = False
            self._inodes = np.flatnonzero(mask)
        return self._inodes

    @property
    def is_boundary(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @property
    def triangle_areas(self):
        return 0.5 * _signed_area2(self.vertices, self.triangles)

    @property
    def area(self):
        return float(self.triangle_areas.sum())

    @property
    def mean_edge_length(self):
        e = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.hypot(e[:, 0], e[:, 1]).mean())

    @property
    def diameter(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @property
    def euler_characteristic(self):
        return 2 - len(self.boundary_loops)

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def vertex_triangles(self):
        """For each vertex, the list of incident triangle ids."""
        if getattr(self, "_vtri", None) is None:
            vt = [[] for _ in range(self.n_vertices)]
            for f, tri in enumerate(self.triangles.tolist()):
                for v in tri:
                    vt[v].append(f)
            self._vtri = vt
        return self._vtri

    def with_corners(self, corners):
        """Copy of the mesh whose boundary loops carry the given corner ids."""
        ids = {c.vertex_id for c in corners}
        out = object.__new__(TriMesh)
        out.__dict__.update(self.__dict__)
        out.boundary_loops = [
            BoundaryLoop(lp.vertex_ids, tuple(i for i in lp.vertex_ids if i in ids), lp.is_outer)
            for lp in self.boundary_loops
        ]
        return out

    def boundary_polylines(self):
        """Closed boundary polygons as (k, 2) arrays, loop order."""
        return [self.vertices[list(lp.vertex_ids)] for lp in self.boundary_loops]

    # -- point location -------------------------------------------------------

    def barycentric(self, tri, p):
        a, b, c = self.vertices[self.triangles[tri]]
        d = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / d
        l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / d
        return np.array([1.0 - l1 - l2, l1, l2])

    def locate(self, p, hint=None, tol=1e-12):
        """Triangle containing ``p`` and its barycentric coordinates.

        Walks from ``hint`` when given, otherwise searches a bucket grid.
        Returns ``(-1, None)`` for points outside the mesh.
        """
        p = (float(p[0]), float(p[1]))
        if hint is not None and hint >= 0:
            tri = hint
            for _ in range(64):
                bc = self.barycentric(tri, p)
                j = int(np.argmin(bc))
                if bc[j] >= -tol:
                    return tri, bc
                nb = self.neighbors[tri, j]
                if nb < 0:
                    break
                tri = nb
        for tri in self._locator()["cells"].get(self._cell_of(p), ()):
            bc = self.barycentric(tri, p)
            if bc.min() >= -tol:
                return tri, bc
        return -1, None

    def _cell_of(self, p):
        loc = self._locator()
        return (int((p[0] - loc["origin"][0]) // loc["h"]), int((p[1] - loc["origin"][1]) // loc["h"]))

    def _locator(self):
        if getattr(self, "_locator_cache", None) is None:
            h = 2.0 * self.mean_edge_length
            origin = self.vertices.min(axis=0)
            xy = self.vertices[self.triangles]
            lo = np.floor((xy.min(axis=1) - origin) / h).astype(int)
            hi = np.floor((xy.max(axis=1) - origin) / h).astype(int)
            cells = {}
            for tri in range(self.n_triangles):
                for i in range(lo[tri, 0], hi[tri, 0] + 1):
                    for j in range(lo[tri, 1], hi[tri, 1] + 1):
                        cells.setdefault((i, j), []).append(tri)
            self._locator_cache = {"h": h, "origin": origin, "cells": cells}
        return self._locator_cache

    def interpolate(self, values, p, hint=None):
        """P1 interpolation of nodal ``values`` at ``p``; ``(value, tri)``."""
        tri, bc = self.locate(p, hint)
        if tri < 0:
            raise ValueError(f"point {tuple(p)} outside mesh")
        return bc @ values[self.triangles[tri]], tri

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_triangles} triangles, {len(self.boundary_loops)} loops)"


def _signed_area2(v, t):
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])


def polygon_area(xy):
    """Signed area (shoelace); positive for counterclockwise polygons."""
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


# -- file formats ---------------------------------------------------------------


def load_mesh(path, format=None):
    """Read an OFF or OBJ file containing a planar triangulation."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if fmt == "OFF":
        v, t = _parse_off(text)
    elif fmt == "OBJ":
        v, t = _parse_obj(text)
    else:
        raise MeshError(f"unknown mesh format {fmt!r}")
    return TriMesh(v, t)


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line.split()


def _parse_off(text):
    lines = list(_tokens(text))
    if not lines or not lines[0][0].upper().endswith("OFF"):
        raise MeshError("missing OFF header")
    head = lines[0][1:] if len(lines[0]) > 1 else None
    body = lines[1:]
    if head is None:
        head, body = body[0], body[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
        verts = [[float(x) for x in row[:3]] for row in body[:nv]]
        faces = []
        for row in body[nv:nv + nf]:
            k = int(row[0])
            if k != 3:
                raise MeshError("non-triangle face")
            faces.append([int(x) for x in row[1:4]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"OFF parse failure: {exc}") from exc
    if len(verts) != nv or len(faces) != nf:
        raise MeshError("OFF parse failure: truncated file")
    return np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_obj(text):
    verts, faces = [], []
    try:
        for row in _tokens(text):
            if row[0] == "v":
                verts.append([float(x) for x in row[1:4]])
            elif row[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in row[1:]]
                if len(idx) != 3:
                    raise MeshError("non-triangle face")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    except ValueError as exc:
        raise MeshError(f"OBJ parse failure: {exc}") from exc
    return np.array(verts).reshape(-1, len(verts[0]) if verts else 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"OFF\n{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} 0\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")


def write_obj(mesh, path):
    with open(path, "w") as fh:
        for x, y in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} 0\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def load_corner_overrides(path):
    """Parse ``vertex_id k`` lines into a dict."""
    out = {}
    for row in _tokens(Path(path).read_text()):
        try:
            out[int(row[0])] = int(row[1])
        except (ValueError, IndexError) as exc:
            raise MeshError(f"bad corner override line {' '.join(row)!r}") from exc
    return out


# -- corners and boundary data ----------------------------------------------------


def _loop_geometry(mesh, loop):
    ids = np.asarray(loop.vertex_ids)
    p = mesh.vertices[ids]
    t_out = np.roll(p, -1, axis=0) - p
    lengths = np.hypot(t_out[:, 0], t_out[:, 1])
    if np.any(lengths <= 1e-14 * mesh.diameter):
        raise MeshError("degenerate zero-length boundary edge")
    out_ang = np.arctan2(t_out[:, 1], t_out[:, 0])
    in_ang = np.roll(out_ang, 1)
    # exterior turning angle at each vertex, in (-pi, pi)
    turn = np.angle(np.exp(1j * (out_ang - in_ang)))
    return ids, out_ang, in_ang, turn


def corner_quarters_for_angle(interior_angle):
    """Nearest-isotropy corner index in quarters: round(2(pi - angle)/pi).

    Ties (135 and 225 degree corners) round toward the larger index.
    """
    return int(math.floor(2.0 * (math.pi - interior_angle) / math.pi + 0.5 + 1e-9))


def detect_corners(mesh, angle_tol=DEFAULT_ANGLE_TOL, overrides=None):
    """Flag boundary vertices whose interior angle departs from pi.

    ``overrides`` maps vertex ids to a user-chosen index (quarters); an
    overridden vertex is always reported as a corner.
    """
    overrides = dict(overrides or {})
    corners = []
    for li, loop in enumerate(mesh.boundary_loops):
        ids, out_ang, _, turn = _loop_geometry(mesh, loop)
        for j, vid in enumerate(ids.tolist()):
            theta = math.pi - float(turn[j])
            user = overrides.pop(vid, None)
            if user is None and abs(math.pi - theta) <= angle_tol:
                continue
            k = corner_quarters_for_angle(theta)
            if k > 1:
                log.warning("corner %d (angle %.1f deg) clamped from index %d/4 to 1/4", vid, math.degrees(theta), k)
                k = 1
            if user is not None:
                k = int(user)
            corners.append(Corner(vid, theta, k, user, float(out_ang[j]), li))
    if overrides:
        raise MeshError(f"corner overrides for non-boundary vertices: {sorted(overrides)}")
    return corners


def assign_boundary_condition(mesh, corners=()):
    """Build the 4-aligned boundary data g.

    Smooth vertices get ``nu**4`` for the bisector outward normal.  At a
    corner with index k/4 the fourth power of the normal turns by
    ``4*turn``; ``2*pi*k`` of that is carried by the corner and the remaining
    jump ``R = 4*turn - 2*pi*k`` is spread in equal steps across the corner
    vertex (and across neighbours when ``|R| > pi``).
    """
    by_vid = {c.vertex_id: c for c in corners}
    nodes, values, cq = [], [], {}
    for loop in mesh.boundary_loops:
        ids, out_ang, in_ang, turn = _loop_geometry(mesh, loop)
        n_in = in_ang - 0.5 * math.pi
        g = np.exp(4j * (n_in + 0.5 * turn))
        m_loop = len(ids)
        for j, vid in enumerate(ids.tolist()):
            c = by_vid.get(vid)
            if c is None:
                continue
            k = c.index_quarters
            cq[vid] = k
            jump = 4.0 * turn[j] - 2.0 * math.pi * k
            m = max(1, math.ceil(abs(jump) / math.pi - 1e-9))
            base = np.exp(4j * n_in[j])
            if m > 1:
                log.warning("corner %d: jump %.2f rad spread over %d neighbours", vid, jump, m - 1)
            for off in range(-m + 1, m):
                g[(j + off) % m_loop] = base * np.exp(1j * jump * (off + m) / (2 * m))
        nodes.append(ids)
        values.append(g)
    nodes = np.concatenate(nodes)
    values = np.concatenate(values)
    values = values / np.abs(values)
    order = np.argsort(nodes)
    return BoundaryCondition(nodes[order], values[order], cq)


def bisector_value(mesh, vertex_id):
    """Raw ``exp(4i * bisector)`` at a boundary vertex, before corner adjustment."""
    for loop in mesh.boundary_loops:
        if vertex_id in loop.vertex_ids:
            ids, _, in_ang, turn = _loop_geometry(mesh, loop)
            j = loop.vertex_ids.index(vertex_id)
            return complex(np.exp(4j * (in_ang[j] - 0.5 * math.pi + 0.5 * turn[j])))
    raise KeyError(vertex_id)


def winding_increments(values):
    """Principal-value argument increments around a closed sequence."""
    v = np.asarray(values, dtype=complex)
    return np.angle(np.roll(v, -1) / v)


def loop_winding(bc, loop, reverse=False, antipodal_tol=1e-6):
    """Discrete winding of g along the loop vertices (no corner terms)."""
    ids = list(loop.vertex_ids)
    if reverse:
        ids = ids[::-1]
    vals = np.array([bc[i] for i in ids])
    inc = winding_increments(vals)
    if np.any(np.abs(inc) > math.pi - antipodal_tol):
        raise ValueError("consecutive boundary values are antipodal; refine the boundary sampling")
    total = inc.sum() / (2.0 * math.pi)
    w = round(total)
    if abs(total - w) > 1e-9:
        raise ValueError(f"winding {total} is not an integer")
    return int(w)


def brouwer_degree(bc, loop, reverse=False):
    """Degree of the boundary data along ``loop`` with corners smoothed.

    This is the discrete winding of g plus the quarter turns carried by the
    corners of the loop, i.e. the degree the data would have on a domain
    whose corners are rounded off.  A circle gives 4, and so does a square
    with four index-1/4 corners.
    """
    w = loop_winding(bc, loop, reverse)
    k = sum(bc.corner_quarters.get(v, 0) for v in loop.vertex_ids)
    return w - k if reverse else w + k


def effective_degree(mesh, bc):
    """Total winding of g over all loops (domain orientation).

    Equals the sum of the representation-field degrees that any unit field
    matching g must carry in the interior.
    """
    return sum(loop_winding(bc, lp) for lp in mesh.boundary_loops)


def index_budget(mesh, corners):
    """Interior cross-field index demanded by Poincare-Hopf (exact)."""
    from fractions import Fraction

    return Fraction(mesh.euler_characteristic) - sum((c.index for c in corners), Fraction(0))


def point_in_polygon(p, poly):
    """Even-odd ray casting test."""
    x, y = p
    xs, ys = poly[:, 0], poly[:, 1]
    xj, yj = np.roll(xs, 1), np.roll(ys, 1)
    cond = (ys > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = (xj - xs) * (y - ys) / (yj - ys) + xs
    return bool(np.count_nonzero(cond & (x < xint)) % 2)


def interior_point(poly):
    """Some point strictly inside a simple polygon."""
    c = poly.mean(axis=0)
    if point_in_polygon(c, poly):
        return c
    for i in range(len(poly)):
        a, b, d = poly[i - 1], poly[i], poly[(i + 1) % len(poly)]
        for s in (0.5, 0.25, 0.1, 0.01):
            q = b + s * ((a - b) + (d - b)) / 2.0
            if point_in_polygon(q, poly):
                return q
    raise ValueError("could not find an interior point")


def hole_points(mesh):
    """One point inside each hole (for multiply connected domains)."""
    return [interior_point(mesh.vertices[list(lp.vertex_ids)]) for lp in mesh.boundary_loops if not lp.is_outer]


def as_points(seq: Sequence) -> np.ndarray:
    return np.asarray(seq, dtype=float).reshape(-1, 2)


def refine_uniform(mesh):
    """Split every triangle into four through its edge midpoints."""
    nv = mesh.n_vertices
    edges = mesh.edges
    key = {(int(a), int(b)): nv + i for i, (a, b) in enumerate(edges)}
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])

    def mid(a, b):
        return key[(a, b) if a < b else (b, a)]

    tris = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return TriMesh(np.vstack([mesh.vertices, mids]), tris)
