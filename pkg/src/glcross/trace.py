"""Streamline tracing in a cross field and the separatrix partitioning loop.

Streamlines follow the branch of the cross that is closest to the current
heading, so the quarter-turn ambiguity is resolved locally.  Integration is
classical RK4 at unit speed.  Inside a triangle the P1 field is smooth, so
steps are cut exactly where the path leaves the triangle; this keeps the
fourth-order behaviour of RK4 instead of degrading it at element edges.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .crossfield import face_windings

log = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi


class TracingError(ValueError):
    pass


class PartitionError(RuntimeError):
    """A limit-cycle separatrix never met the accepted curve set."""


@dataclass
class TraceParams:
    step: float | None = None  # default 0.25 * mean edge length
    snap_radius: float | None = None  # default 1.5 * local edge length
    max_length: float | None = None  # default 30 * diameter
    cycle_min_length: float | None = None  # default 0.1 * diameter
    cycle_angle: float = math.pi / 8
    cycle_turns: int = 60

    def resolved(self, mesh):
        h = self.step if self.step is not None else 0.25 * mesh.mean_edge_length
        if h <= 0:
            raise ValueError("step must be positive")
        return TraceParams(
            step=h,
            snap_radius=self.snap_radius if self.snap_radius is not None else 1.5 * mesh.mean_edge_length,
            max_length=self.max_length if self.max_length is not None else 30.0 * mesh.diameter,
            cycle_min_length=self.cycle_min_length if self.cycle_min_length is not None else 0.1 * mesh.diameter,
            cycle_angle=self.cycle_angle,
            cycle_turns=self.cycle_turns,
        )


@dataclass
class Termination:
    kind: str  # singularity | boundary | corner | hit_curve | limit_cycle | max_length
    point: tuple | None = None
    singularity: int | None = None
    corner: int | None = None
    edge: tuple | None = None  # boundary edge (vertex a, vertex b) for exits
    curve: int | None = None
    segment: int | None = None
    param: float | None = None


@dataclass(eq=False)
class Streamline:
    points: np.ndarray
    direction: np.ndarray
    origin: tuple = ()
    termination: Termination = field(default_factory=lambda: Termination("max_length"))
    arrival: int | None = None  # exit index used at the end node (singularity/corner)
    duplicate_of: int | None = None
    cycle_closure: np.ndarray | None = None
    onto_boundary: bool = False  # converges onto a boundary loop

    @property
    def length(self):
        d = np.diff(self.points, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def turning_angles(self):
        d = np.diff(self.points, axis=0)
        d = d[np.hypot(d[:, 0], d[:, 1]) > 1e-12]
        a = np.arctan2(d[:, 1], d[:, 0])
        return np.abs(np.angle(np.exp(1j * np.diff(a))))


# -- field evaluation -----------------------------------------------------------


class CrossFieldSampler:
    """Per-triangle linear extrapolation of u and branch selection."""

    def __init__(self, rep):
        self.rep = rep
        mesh = rep.mesh
        self.mesh = mesh
        t = mesh.triangles
        v = mesh.vertices
        a = v[t[:, 0]]
        e1 = v[t[:, 1]] - a
        e2 = v[t[:, 2]] - a
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self._a = a.tolist()
        # inverse of [e1 e2]
        self._inv = np.stack([e2[:, 1] / det, -e2[:, 0] / det, -e1[:, 1] / det, e1[:, 0] / det], axis=1).tolist()
        u = rep.values[t]
        self._u = u.tolist()
        self._du1 = (u[:, 1] - u[:, 0]).tolist()
        self._du2 = (u[:, 2] - u[:, 0]).tolist()
        self.windings = face_windings(rep.values, mesh)

    def bary(self, tri, x, y):
        ax, ay = self._a[tri]
        i00, i01, i10, i11 = self._inv[tri]
        dx, dy = x - ax, y - ay
        l1 = i00 * dx + i01 * dy
        l2 = i10 * dx + i11 * dy
        return 1.0 - l1 - l2, l1, l2

    def value(self, tri, x, y):
        _, l1, l2 = self.bary(tri, x, y)
        return self._u[tri][0] + l1 * self._du1[tri] + l2 * self._du2[tri]

    def direction(self, tri, x, y, vx, vy):
        u = self.value(tri, x, y)
        if abs(u) < 1e-13:
            raise TracingError("field vanishes (near singularity)")
        base = math.atan2(u.imag, u.real) / 4.0
        va = math.atan2(vy, vx)
        k = round((va - base) / HALF_PI)
        ang = base + k * HALF_PI
        return math.cos(ang), math.sin(ang)

    def branch_gap(self, tri, x, y, vx, vy):
        """Distance (in units of pi/2) of the heading from the nearest branch boundary."""
        u = self.value(tri, x, y)
        base = math.atan2(u.imag, u.real) / 4.0
        f = (math.atan2(vy, vx) - base) / HALF_PI
        return abs(abs(f - math.floor(f) - 0.5))


# -- single streamline ------------------------------------------------------------


class _Tracer:
    def __init__(self, rep, params, singularities=(), corners=(), sampler=None):
        self.rep = rep
        self.mesh = rep.mesh
        self.p = params.resolved(rep.mesh)
        self.s = sampler or CrossFieldSampler(rep)
        self.sings = list(singularities)
        self.sing_loc = np.array([s.location for s in self.sings]).reshape(-1, 2)
        self.sing_faces = {}
        for i, s in enumerate(self.sings):
            for f in tuple(s.faces) or (s.face_id,):
                self.sing_faces[f] = i
        self.corners = list(corners)
        self.corner_loc = self.mesh.vertices[[c.vertex_id for c in self.corners]].reshape(-1, 2)
        # only corners with interior separatrices can absorb an arriving curve
        self.corner_open = np.array([c.index_quarters <= 0 for c in self.corners], dtype=bool)

    def rk4(self, tri, x, y, vx, vy, h):
        d = self.s.direction
        k1 = d(tri, x, y, vx, vy)
        k2 = d(tri, x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], vx, vy)
        k3 = d(tri, x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], vx, vy)
        k4 = d(tri, x + h * k3[0], y + h * k3[1], vx, vy)
        return (
            x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            y + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        )

    def _exit_param(self, tri, x, y, vx, vy, h, j):
        """Step length at which the RK4 endpoint crosses barycentric coordinate j."""
        f0 = self.s.bary(tri, x, y)[j]
        lo, hi = 0.0, h
        flo, fhi = f0, self.s.bary(tri, *self.rk4(tri, x, y, vx, vy, h))[j]
        side = 0
        for _ in range(60):
            if fhi == flo:
                break
            m = (lo * fhi - hi * flo) / (fhi - flo)
            fm = self.s.bary(tri, *self.rk4(tri, x, y, vx, vy, m))[j]
            if abs(fm) < 1e-14 or hi - lo < 1e-15 * h:
                return m
            if fm > 0:
                lo, flo = m, fm
                if side == 1:
                    fhi *= 0.5
                side = 1
            else:
                hi, fhi = m, fm
                if side == -1:
                    flo *= 0.5
                side = -1
        return hi

    def trace(self, start, dir0, origin=(), origin_sing=None, origin_corner=None, tri0=None, check_dir0=True):
        mesh, P, S = self.mesh, self.p, self.s
        x, y = float(start[0]), float(start[1])
        tri, _ = mesh.locate((x, y), hint=tri0)
        if tri < 0:
            raise TracingError(f"start point {(x, y)} is outside the mesh")
        vx, vy = float(dir0[0]), float(dir0[1])
        nv = math.hypot(vx, vy)
        if nv == 0:
            raise TracingError("zero initial direction")
        vx, vy = vx / nv, vy / nv
        if check_dir0 and S.branch_gap(tri, x, y, vx, vy) < 1e-6:
            raise TracingError("initial direction is ambiguous between two cross branches")
        vx, vy = S.direction(tri, x, y, vx, vy)

        h = P.step
        pts = [(x, y)]
        length = 0.0
        cell = P.step
        grid = {}
        heading = []
        tiny = 0
        term = None
        n_steps = int(P.max_length / h) * 4 + 100
        for _ in range(n_steps):
            if length >= P.max_length:
                term = Termination("max_length", point=(x, y))
                break
            try:
                qx, qy = self.rk4(tri, x, y, vx, vy, h)
            except TracingError:
                term = self._sing_term(x, y, tri)
                break
            lam = S.bary(tri, qx, qy)
            j = int(np.argmin(lam))
            crossing = lam[j] < -1e-13
            if crossing:
                s_ex = self._exit_param(tri, x, y, vx, vy, h, j)
                qx, qy = self.rk4(tri, x, y, vx, vy, s_ex)
                lam2 = S.bary(tri, qx, qy)
                j2 = int(np.argmin(lam2))
                if j2 != j and lam2[j2] < -1e-10:
                    s_ex = self._exit_param(tri, x, y, vx, vy, s_ex, j2)
                    qx, qy = self.rk4(tri, x, y, vx, vy, s_ex)
                    j = j2
                if s_ex < 1e-9 * h:
                    tiny += 1
                    if tiny > 3:
                        # running along an edge: take a plain step and relocate
                        dx, dy = S.direction(tri, x, y, vx, vy)
                        qx, qy = x + h * dx, y + h * dy
                        t2, _ = mesh.locate((qx, qy), hint=tri)
                        if t2 < 0:
                            term = self._boundary_term(x, y, tri, qx, qy)
                            pts.append(term.point)
                            break
                        tri, tiny, crossing = t2, 0, False
                else:
                    tiny = 0
            ddx, ddy = qx - x, qy - y
            dl = math.hypot(ddx, ddy)
            if dl > 1e-14:
                vx, vy = ddx / dl, ddy / dl
            x, y = qx, qy
            length += dl
            if dl > 1e-9 * h:
                pts.append((x, y))
            if crossing:
                nb = int(mesh.neighbors[tri, j])
                if nb < 0:
                    term = self._boundary_term_on_edge(x, y, tri, j)
                    pts[-1] = term.point
                    break
                tri = nb
                lam = S.bary(tri, x, y)
                if min(lam) < -1e-8:
                    t2, _ = mesh.locate((x, y), hint=tri)
                    if t2 < 0:
                        term = self._boundary_term_on_edge(x, y, tri, int(np.argmin(lam)))
                        pts[-1] = term.point
                        break
                    tri = t2
            # singular neighbourhoods
            hit = self._near_singularity(x, y, tri, length, origin_sing)
            if hit is not None:
                term = Termination("singularity", point=tuple(self.sing_loc[hit]), singularity=hit)
                pts.append(term.point)
                break
            if dl > 0.5 * h and length > max(P.cycle_min_length, 4.0 * h):
                if self._check_cycle(grid, heading, x, y, vx, vy, length, cell):
                    term = Termination("limit_cycle", point=(x, y))
                    break
            if dl > 0.5 * h:
                key = (int(math.floor(x / cell)), int(math.floor(y / cell)))
                grid.setdefault(key, []).append(len(heading))
                heading.append((x, y, vx, vy, length))
        else:
            term = Termination("max_length", point=(x, y))
        pts = np.array(pts)
        st = Streamline(pts, np.array([vx, vy]), origin, term)
        st._state = (tri, x, y, vx, vy)
        st._grid = (grid, heading)
        if term.kind == "max_length":
            log.warning("streamline %s reached the maximum length without termination", origin)
        return st

    def _near_singularity(self, x, y, tri, length, origin_sing):
        if len(self.sing_loc):
            d = np.hypot(self.sing_loc[:, 0] - x, self.sing_loc[:, 1] - y)
            for i in np.argsort(d)[:2].tolist():
                if d[i] < self.p.snap_radius * (1 - 1e-9):
                    if i != origin_sing or length > 3 * self.p.snap_radius:
                        return i
        f = self.sing_faces.get(tri)
        if f is not None and (f != origin_sing or length > 3 * self.p.snap_radius):
            return f
        return None

    def _sing_term(self, x, y, tri):
        if len(self.sing_loc):
            d = np.hypot(self.sing_loc[:, 0] - x, self.sing_loc[:, 1] - y)
            i = int(np.argmin(d))
            return Termination("singularity", point=tuple(self.sing_loc[i]), singularity=i)
        return Termination("max_length", point=(x, y))

    def _boundary_term_on_edge(self, x, y, tri, j):
        t = self.mesh.triangles[tri]
        a, b = int(t[(j + 1) % 3]), int(t[(j + 2) % 3])
        pa, pb = self.mesh.vertices[a], self.mesh.vertices[b]
        e = pb - pa
        s = float(np.clip(np.dot((x - pa[0], y - pa[1]), e) / np.dot(e, e), 0.0, 1.0))
        pt = pa + s * e
        return self._snap_corner(Termination("boundary", point=(float(pt[0]), float(pt[1])), edge=(a, b), param=s))

    def _boundary_term(self, x, y, tri, qx, qy):
        # segment from (x, y) to (qx, qy) leaves the mesh: find the boundary edge it crosses
        best = None
        for lp in self.mesh.boundary_loops:
            ids = list(lp.vertex_ids)
            for a, b in zip(ids, ids[1:] + ids[:1]):
                hit = _seg_intersect((x, y), (qx, qy), self.mesh.vertices[a], self.mesh.vertices[b])
                if hit is not None and (best is None or hit[0] < best[0]):
                    best = (hit[0], hit[1], a, b, hit[2])
        if best is None:
            return Termination("boundary", point=(x, y))
        _, pt, a, b, s = best
        return self._snap_corner(Termination("boundary", point=tuple(map(float, pt)), edge=(a, b), param=s))

    def _snap_corner(self, term):
        if self.corner_open.any():
            d = np.hypot(self.corner_loc[:, 0] - term.point[0], self.corner_loc[:, 1] - term.point[1])
            d[~self.corner_open] = np.inf
            i = int(np.argmin(d))
            if d[i] < self.p.snap_radius:
                return Termination("corner", point=tuple(map(float, self.corner_loc[i])), corner=i, edge=term.edge)
        return term

    def _check_cycle(self, grid, heading, x, y, vx, vy, length, cell):
        P = self.p
        cx, cy = int(math.floor(x / cell)), int(math.floor(y / cell))
        cos_tol = math.cos(P.cycle_angle)
        min_len = max(P.cycle_min_length, 4.0 * P.step)
        for i in range(cx - 1, cx + 2):
            for j in range(cy - 1, cy + 2):
                for k in grid.get((i, j), ()):
                    hx, hy, hvx, hvy, hl = heading[k]
                    if length - hl < min_len:
                        continue
                    if math.hypot(hx - x, hy - y) < P.step and hvx * vx + hvy * vy > cos_tol:
                        return True
        return False

    # -- cycle closure --------------------------------------------------------

    def close_cycle(self, st):
        """Follow a cycle-detected streamline until successive turns agree, then splice."""
        tri, x, y, vx, vy = st._state
        P = self.p
        prev = None
        loop = None
        for _ in range(P.cycle_turns):
            sub = self.trace((x, y), (vx, vy), tri0=tri, check_dir0=False)
            if sub.termination.kind != "limit_cycle":
                break
            pts = sub.points
            # shortest return to the starting point after leaving it
            d = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
            arc = np.concatenate([[0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
            cand = np.flatnonzero(arc > P.cycle_min_length)
            if len(cand) == 0:
                break
            k = int(cand[np.argmin(d[cand])])
            loop = pts[: k + 1]
            gap = float(d[k])
            tri, x, y, vx, vy = sub._state if k == len(pts) - 1 else (self.mesh.locate(pts[k])[0], *pts[k], vx, vy)
            if prev is not None and abs(prev - gap) < 1e-3 * P.step and gap < 1e-2 * P.step:
                break
            prev = gap
        if loop is None:
            return None
        return np.vstack([loop[:-1], loop[:1]]) if len(loop) > 2 else None


def _seg_intersect(p, q, a, b, tol=0.0):
    """Intersection of segments pq and ab: (t on pq, point, s on ab) or None."""
    px, py = p
    rx, ry = q[0] - px, q[1] - py
    ax, ay = a
    sx, sy = b[0] - ax, b[1] - ay
    den = rx * sy - ry * sx
    if den == 0:
        return None
    wx, wy = ax - px, ay - py
    t = (wx * sy - wy * sx) / den
    s = (wx * ry - wy * rx) / den
    if -tol <= t <= 1 + tol and -tol <= s <= 1 + tol:
        return t, (px + t * rx, py + t * ry), s
    return None


def trace_streamline(rep, start, dir0, params=None, singularities=(), corners=()):
    """Trace one streamline from ``start`` along the branch nearest ``dir0``."""
    return _Tracer(rep, params or TraceParams(), singularities, corners).trace(start, dir0)


# -- separatrices -------------------------------------------------------------------


def _local_edge(mesh, tri):
    v = mesh.vertices[mesh.triangles[tri]]
    return float(np.mean(np.hypot(*(np.roll(v, -1, axis=0) - v).T)))


def _corner_launches(corners):
    from .crossfield import boundary_separatrix_directions

    out = []
    for ci, c in enumerate(corners):
        if c.index_quarters >= 2:
            continue
        info = boundary_separatrix_directions(c)
        for k, ang in enumerate(info.exit_directions):
            if 0 < k < len(info.exit_directions) - 1:
                out.append((ci, k, ang))
    return out


def trace_separatrices(rep, singularities, corners=(), params=None):
    """Trace every separatrix and sort it into ``(S, P, L)``.

    Each exit direction of every interior singularity and every interior
    separatrix direction of a boundary corner (index < 1/2, flat points
    excluded) is seeded at the snap radius.  A separatrix that arrives at a
    singularity or corner marks the matching exit there as used; the trace
    launched from that exit is kept but tagged ``duplicate_of``.
    """
    params = params or TraceParams()
    mesh = rep.mesh
    tr = _Tracer(rep, params, singularities, corners)
    base_snap = params.snap_radius
    launches = []
    for si, s in enumerate(singularities):
        for k, ang in enumerate(s.exit_directions):
            launches.append(("singularity", si, k, ang))
    for ci, k, ang in _corner_launches(corners):
        launches.append(("corner", ci, k, ang))

    curves = []
    consumed = {}
    for kind, idx, k, ang in launches:
        if kind == "singularity":
            s = singularities[idx]
            loc = np.asarray(s.location)
            snap = base_snap if base_snap is not None else 1.5 * _local_edge(mesh, s.face_id)
        else:
            loc = mesh.vertices[corners[idx].vertex_id]
            snap = tr.p.snap_radius
        d = np.array([math.cos(ang), math.sin(ang)])
        seed = loc + snap * d
        tr.p.snap_radius = snap
        try:
            if mesh.locate(seed)[0] < 0:
                # the exit leaves the domain before the snap radius
                term = tr._boundary_term(loc[0], loc[1], -1, seed[0], seed[1])
                st = Streamline(np.array([term.point]), d, (kind, idx, k), term)
            else:
                st = tr.trace(seed, d, origin=(kind, idx, k),
                              origin_sing=idx if kind == "singularity" else None, check_dir0=False)
        except TracingError as exc:
            log.warning("separatrix %s could not be traced: %s", (kind, idx, k), exc)
            continue
        st.points = np.vstack([loc, st.points])
        key = (kind, idx, k)
        if key in consumed:
            st.duplicate_of = consumed[key]
        _mark_arrival(st, singularities, corners, mesh, consumed, len(curves))
        curves.append(st)

    S, P, L = [], [], []
    for st in curves:
        if st.termination.kind == "boundary" and _grazes_boundary(st, mesh, tr.p.step):
            # a boundary loop of a boundary-aligned field is a closed orbit; a curve that
            # reaches it along the tangent branch is converging to it, not exiting
            log.info("separatrix %s converges onto the boundary; treated as limit-cycle bound", st.origin)
            t = st.termination
            st.termination = Termination("limit_cycle", point=t.point, edge=t.edge, param=t.param)
            st.onto_boundary = True
            P.append(st)
            continue
        if st.termination.kind in ("limit_cycle", "max_length"):
            if st.termination.kind == "max_length":
                log.warning("separatrix %s hit the length cap; treated as limit-cycle bound", st.origin)
            P.append(st)
            if st.termination.kind == "limit_cycle":
                cyc = tr.close_cycle(st)
                if cyc is not None and not any(_same_cycle(cyc, c, tr.p.step) for c in L):
                    L.append(cyc)
        else:
            S.append(st)
    return S, P, L


def _grazes_boundary(st, mesh, h):
    """True when the curve meets its boundary edge closer to tangent than to normal."""
    a, b = st.termination.edge
    e = mesh.vertices[b] - mesh.vertices[a]
    pts = st.points
    end = pts[-1]
    d = np.hypot(pts[:, 0] - end[0], pts[:, 1] - end[1])
    back = np.flatnonzero(d >= h)
    if len(back) == 0:
        return False
    v = end - pts[back[-1]]
    sin = abs(e[0] * v[1] - e[1] * v[0]) / (np.hypot(*e) * np.hypot(*v))
    return bool(sin < math.sqrt(0.5))


def _mark_arrival(st, singularities, corners, mesh, consumed, curve_id):
    term = st.termination
    pts = st.points
    if term.kind == "singularity":
        s = singularities[term.singularity]
        if not s.exit_directions:
            return
        back = pts[-2] - np.asarray(s.location)
        a = math.atan2(back[1], back[0])
        k = int(np.argmin([abs(np.angle(np.exp(1j * (a - e)))) for e in s.exit_directions]))
        st.arrival = k
        consumed.setdefault(("singularity", term.singularity, k), curve_id)
    elif term.kind == "corner":
        c = corners[term.corner]
        if c.index_quarters >= 2:
            return
        back = pts[-2] - mesh.vertices[c.vertex_id]
        a = math.atan2(back[1], back[0])
        from .crossfield import boundary_separatrix_directions

        dirs = boundary_separatrix_directions(c).exit_directions
        inner = list(range(1, len(dirs) - 1))
        if inner:
            k = min(inner, key=lambda i: abs(np.angle(np.exp(1j * (a - dirs[i])))))
            st.arrival = k
            consumed.setdefault(("corner", term.corner, k), curve_id)


def _same_cycle(a, b, h):
    d, _ = cKDTree(b).query(a)
    return float(np.max(d)) < 4 * h


# -- Algorithm 1 -------------------------------------------------------------------


class SegmentIndex:
    """Uniform-grid index over polyline segments for intersection queries."""

    def __init__(self, cell):
        self.cell = float(cell)
        self.grid = {}
        self.segs = []  # (x0, y0, x1, y1, curve, seg)

    def add(self, curve_id, pts, closed=False):
        pts = np.asarray(pts)
        if closed:
            pts = np.vstack([pts, pts[:1]]) if np.any(pts[0] != pts[-1]) else pts
        for i in range(len(pts) - 1):
            x0, y0 = pts[i]
            x1, y1 = pts[i + 1]
            k = len(self.segs)
            self.segs.append((float(x0), float(y0), float(x1), float(y1), curve_id, i))
            for key in self._cells(x0, y0, x1, y1):
                self.grid.setdefault(key, []).append(k)

    def _cells(self, x0, y0, x1, y1):
        c = self.cell
        i0, i1 = int(math.floor(min(x0, x1) / c)), int(math.floor(max(x0, x1) / c))
        j0, j1 = int(math.floor(min(y0, y1) / c)), int(math.floor(max(y0, y1) / c))
        return [(i, j) for i in range(i0, i1 + 1) for j in range(j0, j1 + 1)]

    def query(self, p, q, exclude=(), tol=0.0):
        seen = set()
        hits = []
        for key in self._cells(p[0], p[1], q[0], q[1]):
            for k in self.grid.get(key, ()):
                if k in seen:
                    continue
                seen.add(k)
                x0, y0, x1, y1, cid, si = self.segs[k]
                if cid in exclude:
                    continue
                r = _seg_intersect(p, q, (x0, y0), (x1, y1), tol)
                if r is not None:
                    hits.append((r[0], r[1], cid, si, r[2]))
        hits.sort(key=lambda hit: hit[0])
        return hits


def first_intersection(pts, index, skip_radius, exclude=(), tol=0.0):
    """First crossing of polyline ``pts`` with the indexed curves.

    Contacts within ``skip_radius`` of the polyline's start are ignored.
    Returns ``(segment, t, point, curve, curve_segment, curve_t)`` or None.
    """
    start = pts[0]
    for i in range(len(pts) - 1):
        for t, pt, cid, si, s in index.query(pts[i], pts[i + 1], exclude, tol):
            if math.hypot(pt[0] - start[0], pt[1] - start[1]) <= skip_radius:
                continue
            return i, t, pt, cid, si, s
    return None


def _project(p, a, b):
    e = b - a
    ee = float(e @ e)
    s = 0.0 if ee == 0 else float(np.clip((p - a) @ e / ee, 0.0, 1.0))
    q = a + s * e
    return float(np.hypot(*(p - q))), q, s


def first_contact(pts, cyc, probe, band, skip_radius):
    """First place where polyline ``pts`` crosses or comes within ``band`` of the
    closed curve ``cyc``.  Returns ``(segment, point on cyc, cyc segment, cyc t)``.

    Separatrices spiral onto limit cycles without crossing them, so contact
    within a band (one tracing step) counts as arrival.
    """
    cyc = np.asarray(cyc)
    if np.allclose(cyc[0], cyc[-1]):
        cyc = cyc[:-1]
    n = len(cyc)
    seglen = np.hypot(*(np.roll(cyc, -1, axis=0) - cyc).T)
    tree = cKDTree(cyc)
    reach = band + float(seglen.max())
    start = pts[0]
    for i in range(len(pts) - 1):
        if math.hypot(pts[i + 1][0] - start[0], pts[i + 1][1] - start[1]) <= skip_radius:
            continue
        cross = probe.query(pts[i], pts[i + 1])
        if cross:
            t, pt, _, si, s = cross[0]
            return i, np.asarray(pt), si, s
        p = np.asarray(pts[i + 1])
        best = None
        for k in tree.query_ball_point(p, reach):
            for j in (k - 1, k):
                j %= n
                dist, q, s = _project(p, cyc[j], cyc[(j + 1) % n])
                if dist <= band and (best is None or dist < best[0]):
                    best = (dist, q, j, s)
        if best is not None:
            return i + 1, best[1], best[2], best[3]
    return None


@dataclass
class TJunction:
    point: tuple
    cut_curve: int
    host_curve: int
    host_segment: int | None
    host_param: float | None
    edge: tuple | None = None  # boundary edge when the host is the domain boundary


@dataclass
class PartitionResult:
    B: list  # accepted curves: dicts with id, points, closed, kind, source
    S: list
    P: list
    L: list
    t_junctions: list

    @property
    def curves(self):
        return self.B


def partition(rep, S, P, L, params=None):
    """Accept separatrices and limit cycles into a partition (Algorithm 1)."""
    params = (params or TraceParams()).resolved(rep.mesh)
    h = params.step
    skip = 1.01 * params.snap_radius
    index = SegmentIndex(4 * h)
    B = []

    def accept(points, kind, closed=False, source=None, term=None):
        cid = len(B)
        B.append({"id": cid, "points": np.asarray(points), "closed": closed, "kind": kind,
                  "source": source, "termination": term})
        index.add(cid, points, closed)
        return cid

    for st in S:
        if st.duplicate_of is None:
            accept(st.points, "separatrix", source=st.origin, term=st.termination)

    pending = [st for st in P]
    tj = []
    for cyc in L:
        probe = SegmentIndex(4 * h)
        probe.add(-1, cyc, closed=True)
        crossed = any(
            first_intersection(b["points"], probe, 0.0) is not None for b in B if not b["closed"]
        )
        if crossed:
            continue
        lid = accept(cyc, "limit_cycle", closed=True)
        chosen = None
        for st in pending:
            hit = first_contact(st.points, cyc, probe, h, skip)
            if hit is not None:
                chosen = (st, hit)
                break
        if chosen is None:
            raise PartitionError("no limit-cycle separatrix reaches the accepted limit cycle")
        st, (i, pt, si, s) = chosen
        cut = np.vstack([st.points[: i + 1], [pt]])
        cid = accept(cut, "separatrix", source=st.origin,
                     term=Termination("hit_curve", point=tuple(pt), curve=lid, segment=si, param=s))
        tj.append(TJunction(tuple(map(float, pt)), cid, lid, si, s))
        pending.remove(st)

    for st in pending:
        hit = first_intersection(st.points, index, skip)
        if hit is None and st.onto_boundary:
            # the boundary loop is the cycle this curve converges to: T-junction on it
            t = st.termination
            cid = accept(st.points, "separatrix", source=st.origin,
                         term=Termination("hit_curve", point=t.point, edge=t.edge, param=t.param))
            tj.append(TJunction(tuple(map(float, t.point)), cid, None, None, t.param, t.edge))
            continue
        if hit is None:
            raise PartitionError(
                f"separatrix {st.origin} never meets an accepted curve; a limit-cycle separatrix "
                "has to cross another separatrix, so the tracing tolerances are too loose"
            )
        i, t, pt, host, si, s = hit
        cut = np.vstack([st.points[: i + 1], [pt]])
        cid = accept(cut, "separatrix", source=st.origin,
                     term=Termination("hit_curve", point=tuple(pt), curve=host, segment=si, param=s))
        tj.append(TJunction(tuple(map(float, pt)), cid, host, si, s))
    return PartitionResult(B, S, list(P), L, tj)
