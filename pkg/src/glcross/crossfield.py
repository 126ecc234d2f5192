"""Reading a representation field as a cross field.

Singularities live on faces: a face whose three directed edges accumulate a
nonzero principal-value phase change carries that many full turns of u,
i.e. a cross index of ``degree / 4``.  All index bookkeeping is done in
quarters (integers) or :class:`fractions.Fraction`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .mesh import Point2

log = logging.getLogger(__name__)

N_DIR = 4


class NearSingularityError(ValueError):
    pass


@dataclass(frozen=True)
class CrossSample:
    location: Point2
    directions: tuple  # four angles, quarter-turn orbit

    @property
    def vectors(self):
        a = np.asarray(self.directions)
        return np.column_stack([np.cos(a), np.sin(a)])


@dataclass
class Singularity:
    face_id: int
    location: Point2
    rep_degree: int
    theta0: float = 0.0
    exit_directions: list = field(default_factory=list)
    degenerate_zero: bool = False
    faces: tuple = ()  # all winding faces merged into this singularity

    @property
    def cross_index(self):
        return Fraction(self.rep_degree, N_DIR)

    @property
    def sign(self):
        return 1 if self.rep_degree > 0 else -1


@dataclass
class BoundarySingularityInfo:
    vertex_id: int
    index_quarters: int
    sectors: int
    relative_directions: list  # from the outgoing boundary edge, counterclockwise
    exit_directions: list  # absolute angles

    @property
    def n_separatrices(self):
        return len(self.exit_directions)

    @property
    def interior_directions(self):
        return self.exit_directions[1:-1]


# -- sampling -----------------------------------------------------------------


def cross_directions(u):
    """The four unit directions whose fourth power is ``u``."""
    base = np.angle(u) / N_DIR
    return tuple(float((base + k * 2 * math.pi / N_DIR) % (2 * math.pi)) for k in range(N_DIR))


def sample_cross(rep, p, hint=None):
    """Cross at ``p`` from the P1 interpolant of the representation field."""
    mesh = rep.mesh
    tri, bc = mesh.locate(p, hint)
    if tri < 0:
        raise ValueError(f"point {tuple(p)} outside mesh")
    if face_winding(rep.values, mesh.triangles[tri]) != 0:
        raise NearSingularityError(f"point {tuple(p)} lies in a singular face (near singularity)")
    u = bc @ rep.values[mesh.triangles[tri]]
    if abs(u) < 1e-12:
        raise NearSingularityError(f"field vanishes at {tuple(p)} (near singularity)")
    return CrossSample(Point2(float(p[0]), float(p[1])), cross_directions(u / abs(u)))


# -- windings -----------------------------------------------------------------


def face_winding(values, tri):
    a, b, c = values[tri[0]], values[tri[1]], values[tri[2]]
    s = np.angle(b / a) + np.angle(c / b) + np.angle(a / c)
    return int(round(s / (2 * math.pi)))


def face_windings(values, mesh):
    """Winding number of u around every (counterclockwise) face."""
    t = mesh.triangles
    a, b, c = values[t[:, 0]], values[t[:, 1]], values[t[:, 2]]
    s = np.angle(b / a) + np.angle(c / b) + np.angle(a / c)
    return np.rint(s / (2 * math.pi)).astype(int)


def boundary_winding(values, mesh):
    """Total winding of the boundary values over all loops, domain orientation."""
    total = 0.0
    for lp in mesh.boundary_loops:
        v = values[list(lp.vertex_ids)]
        total += np.angle(np.roll(v, -1) / v).sum()
    return int(round(total / (2 * math.pi)))


def face_winding_identity(rep, corners=()):
    """``(sum of face degrees + sum of corner quarters, smoothed boundary degree)``.

    The boundary side is the winding of u along every loop plus the quarter
    turns held at the corners; both sides agree exactly for any nonvanishing
    nodal field because interior edges cancel.
    """
    k = sum(c.index_quarters for c in corners)
    lhs = int(face_windings(rep.values, rep.mesh).sum()) + k
    return lhs, boundary_winding(rep.values, rep.mesh) + k


# -- zeros and singularities --------------------------------------------------


def locate_zero_in_face(rep, face_id, return_flag=False):
    """Zero of the linear interpolant of u inside a winding face."""
    mesh = rep.mesh
    tri = mesh.triangles[face_id]
    if face_winding(rep.values, tri) == 0:
        raise ValueError(f"face {face_id} does not wind; it holds no zero")
    u = rep.values[tri]
    p = mesh.vertices[tri]
    # u(l1, l2) = u0 + l1 (u1 - u0) + l2 (u2 - u0) = 0, split into real parts
    A = np.array([[(u[1] - u[0]).real, (u[2] - u[0]).real], [(u[1] - u[0]).imag, (u[2] - u[0]).imag]])
    rhs = -np.array([u[0].real, u[0].imag])
    flag = False
    det = np.linalg.det(A)
    if abs(det) < 1e-14 * max(1.0, np.abs(A).max() ** 2):
        lam = np.full(3, 1.0 / 3.0)
        flag = True
        log.info("face %d: degenerate interpolant, using barycenter", face_id)
    else:
        l12 = np.linalg.solve(A, rhs)
        lam = np.array([1.0 - l12.sum(), l12[0], l12[1]])
        if lam.min() < -1e-9:
            log.debug("face %d: zero %.3g outside face, clamped", face_id, lam.min())
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum()
    loc = Point2(*map(float, lam @ p))
    return (loc, flag) if return_flag else loc


def _ring(mesh, face_ids, rings):
    verts = set(mesh.triangles[np.atleast_1d(face_ids)].ravel().tolist())
    for _ in range(rings):
        adj = mesh.vertex_triangles
        nxt = set(verts)
        for v in verts:
            for t in adj[v]:
                nxt.update(mesh.triangles[t].tolist())
        verts = nxt
    return np.array(sorted(verts))


def fit_theta0(rep, location, rep_degree, nodes):
    """Least-squares phase: minimises sum |u_j - exp(i(d theta_j + theta0))|^2."""
    xy = rep.mesh.vertices[nodes] - np.asarray(location)
    th = np.arctan2(xy[:, 1], xy[:, 0])
    return float(np.angle(np.sum(rep.values[nodes] * np.exp(-1j * rep_degree * th))))


def separatrix_directions(sing, rep=None, rings=1):
    """Exit angles ``(2 pi k + theta0) / (4 - d)`` of an interior singularity.

    When ``rep`` is given, theta0 is first refitted on the ``rings``-ring of
    nodes around the singular face; otherwise ``sing.theta0`` is used.
    """
    d = sing.rep_degree
    if d >= N_DIR:
        raise ValueError("degenerate radial singularity: no isolated separatrices")
    if rep is not None:
        sing.theta0 = fit_theta0(rep, sing.location, d, _ring(rep.mesh, sing.faces or sing.face_id, rings))
    m = N_DIR - d
    return [float(((2 * math.pi * k + sing.theta0) / m) % (2 * math.pi)) for k in range(m)]


def _clusters(mesh, faces):
    """Groups of the given faces connected through shared vertices."""
    todo = set(faces)
    out = []
    while todo:
        seed = min(todo)
        todo.remove(seed)
        group, stack = [seed], [seed]
        while stack:
            f = stack.pop()
            for g in {t for v in mesh.triangles[f].tolist() for t in mesh.vertex_triangles[v]}:
                if g in todo:
                    todo.remove(g)
                    group.append(g)
                    stack.append(g)
        out.append(sorted(group))
    return out


def detect_singularities(rep, rings=1, with_directions=True, merge=True):
    """Singular faces of a unit representation field, located and oriented.

    With ``merge`` (default) winding faces that share a vertex are reported as one
    singularity carrying their total degree.  A point singularity of degree
    ``|d| >= 2`` cannot be confined to one face under principal-value
    winding, so it always appears as such a cluster; clusters whose degrees
    cancel are discretisation dipoles and are dropped.
    """
    mesh = rep.mesh
    w = face_windings(rep.values, mesh)
    hot = np.flatnonzero(w).tolist()
    groups = _clusters(mesh, hot) if merge else [[f] for f in hot]
    out = []
    for group in groups:
        d = int(w[group].sum())
        if d == 0:
            log.info("dropping cancelling winding cluster at faces %s", group)
            continue
        zeros = [locate_zero_in_face(rep, f, return_flag=True) for f in group]
        weights = np.abs(w[group]).astype(float)
        loc = Point2(*map(float, weights @ np.array([z[0] for z in zeros]) / weights.sum()))
        face = group[0]
        if len(group) > 1:
            tri, _ = mesh.locate(loc, hint=group[0])
            face = tri if tri >= 0 else group[int(np.argmax(weights))]
        s = Singularity(face, loc, d, degenerate_zero=any(z[1] for z in zeros), faces=tuple(group))
        if abs(d) > 1:
            log.info("singularity of degree %d at %s (faces %s)", d, tuple(loc), group)
        if d < N_DIR:
            if with_directions:
                s.exit_directions = separatrix_directions(s, rep, rings)
            else:
                s.theta0 = fit_theta0(rep, loc, d, _ring(mesh, group, rings))
        out.append(s)
    return out


def boundary_separatrix_directions(corner):
    """Separatrices at a boundary corner, boundary tangents included.

    ``phi_k = phi_c * k / (2 - d)`` for ``k = 0 .. 2 - d``, measured
    counterclockwise from the outgoing boundary edge.
    """
    d = corner.index_quarters
    if d >= 2:
        raise ValueError("index 1/2 corner: infinitely many separatrices")
    m = 2 - d
    phi_c = corner.interior_angle
    rel = [phi_c * k / m for k in range(m + 1)]
    absolute = [float((corner.out_angle + r) % (2 * math.pi)) for r in rel]
    return BoundarySingularityInfo(corner.vertex_id, d, m, rel, absolute)


def sector_index(opening, delta_arg):
    """Index of a boundary-like sector with opening angle ``opening``.

    ``delta_arg`` is minus the counterclockwise change of arg u across the
    sector (from the outgoing to the incoming side).  A right-angle sector
    with a locally constant field gives 1/4.
    """
    return (math.pi - opening - delta_arg / N_DIR) / (2 * math.pi)


def singularity_sector_indices(sing):
    """Sector index between each pair of consecutive exit directions."""
    m = N_DIR - sing.rep_degree
    opening = 2 * math.pi / m
    return [sector_index(opening, -sing.rep_degree * opening) for _ in range(m)]


def poincare_hopf_check(singularities, corners, mesh):
    """``(lhs, rhs, ok)`` with lhs = interior + corner indices, rhs = Euler characteristic."""
    lhs = sum((Fraction(s.rep_degree, N_DIR) for s in singularities), Fraction(0))
    lhs += sum((Fraction(c.index_quarters, N_DIR) for c in corners), Fraction(0))
    rhs = Fraction(mesh.euler_characteristic)
    return lhs, rhs, lhs == rhs
