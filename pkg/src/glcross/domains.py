"""Triangulations of the planar test domains.

Meshes are built from boundary polygons: straight sides are subdivided at
spacing ``h``, the interior is filled with a hexagonal lattice, a few rounds
of Laplacian smoothing even out the spacing, and ``scipy.spatial.Delaunay``
connects the points.  Boundary edges are checked to be present afterwards.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay

from .mesh import MeshError, TriMesh, polygon_area


def circle(center, radius, h, start=0.0, stop=2 * math.pi, endpoint=False):
    n = max(8, int(math.ceil(abs(stop - start) * radius / h)))
    t = np.linspace(start, stop, n + 1 if endpoint else n, endpoint=endpoint)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def _subdivide(poly, h):
    out = []
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / h - 1e-9)))
        s = np.arange(n)[:, None] / n
        out.append(a + s * (b - a))
    return np.vstack(out)


def _inside(points, loops):
    """Even-odd containment for many points against all loops."""
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    crossings = np.zeros(len(points), dtype=int)
    for poly in loops:
        xs, ys = poly[:, 0][None, :], poly[:, 1][None, :]
        xj, yj = np.roll(poly[:, 0], 1)[None, :], np.roll(poly[:, 1], 1)[None, :]
        cond = (ys > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xs) * (y - ys) / (yj - ys) + xs
        crossings += np.count_nonzero(cond & (x < xint), axis=1)
    return crossings % 2 == 1


def _dist_to_segments(points, loops):
    best = np.full(len(points), np.inf)
    for poly in loops:
        a = poly
        b = np.roll(poly, -1, axis=0)
        ab = b - a
        L2 = np.einsum("ij,ij->i", ab, ab)
        for chunk in np.array_split(np.arange(len(points)), max(1, len(points) // 2000)):
            p = points[chunk][:, None, :]
            t = np.clip(np.einsum("pij,ij->pi", p - a[None], ab) / L2[None], 0, 1)
            d = np.linalg.norm(p - (a[None] + t[..., None] * ab[None]), axis=2).min(axis=1)
            best[chunk] = np.minimum(best[chunk], d)
    return best


def triangulate(loops, h, smooth=4):
    """Triangulate the region bounded by ``loops`` (first = outer boundary)."""
    loops = [np.asarray(lp, dtype=float) for lp in loops]
    loops = [lp if (polygon_area(lp) > 0) == (i == 0) else lp[::-1] for i, lp in enumerate(loops)]
    bnd = [_subdivide(lp, h) for lp in loops]
    bpts = np.vstack(bnd)

    lo, hi = bpts.min(axis=0), bpts.max(axis=0)
    dy = h * math.sqrt(3) / 2
    ys = np.arange(lo[1] + dy / 2, hi[1], dy)
    rows = []
    for r, yv in enumerate(ys):
        xs = np.arange(lo[0] + (0.5 * h if r % 2 else 0.0), hi[0], h)
        rows.append(np.column_stack([xs, np.full_like(xs, yv)]))
    grid = np.vstack(rows) if rows else np.zeros((0, 2))
    keep = _inside(grid, bnd)
    grid = grid[keep]
    grid = grid[_dist_to_segments(grid, bnd) > 0.6 * h]

    nb = len(bpts)
    pts = np.vstack([bpts, grid])
    for _ in range(smooth):
        tri = _filtered(pts, bnd)
        nbrs = [[] for _ in range(len(pts))]
        for a, b, c in tri:
            nbrs[a] += [b, c]
            nbrs[b] += [a, c]
            nbrs[c] += [a, b]
        new = pts.copy()
        for i in range(nb, len(pts)):
            if nbrs[i]:
                new[i] = pts[np.unique(nbrs[i])].mean(axis=0)
        moved = new[nb:]
        ok = _inside(moved, bnd) & (_dist_to_segments(moved, bnd) > 0.4 * h)
        pts[nb:][ok] = moved[ok]
    tri = _filtered(pts, bnd)

    used = np.unique(tri)
    remap = -np.ones(len(pts), dtype=int)
    remap[used] = np.arange(len(used))
    pts, tri = pts[used], remap[tri]

    mesh = TriMesh(pts, tri)
    expected = sum(len(b) for b in bnd)
    if sum(len(lp) for lp in mesh.boundary_loops) != expected or len(mesh.boundary_loops) != len(bnd):
        raise MeshError("boundary not recovered by the triangulation; use a smaller h")
    return mesh


def _filtered(pts, bnd):
    tri = Delaunay(pts).simplices
    v = pts[tri]
    area2 = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
    scale = np.ptp(pts, axis=0).max() ** 2
    # slivers of collinear boundary points have their centroid on the boundary
    return tri[_inside(v.mean(axis=1), bnd) & (np.abs(area2) > 1e-12 * scale)]


# -- named domains -------------------------------------------------------------


def square(h=0.1, size=1.0):
    return triangulate([np.array([[0, 0], [size, 0], [size, size], [0, size]], float)], h)


def disk(h=0.1, radius=1.0):
    return triangulate([circle((0, 0), radius, h)], h)


def half_disk(h=0.1, radius=1.0):
    arc = circle((0, 0), radius, h, 0.0, math.pi, endpoint=True)
    return triangulate([arc], h)


def hexagon(h=0.1, radius=1.0):
    t = np.arange(6) * math.pi / 3
    return triangulate([radius * np.column_stack([np.cos(t), np.sin(t)])], h)


def lshape(h=0.1):
    return triangulate([np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], float)], h)


def two_hole(h=0.1, radius=0.35):
    outer = np.array([[-2, -1], [2, -1], [2, 1], [-2, 1]], float)
    holes = [circle((-1, 0), radius, h)[::-1], circle((1, 0), radius, h)[::-1]]
    return triangulate([outer, *holes], h)


def annulus(h=0.1, inner=0.4, outer=1.0):
    return triangulate([circle((0, 0), outer, h), circle((0, 0), inner, h)[::-1]], h)


def square_with_hole(h=0.1, radius=0.35):
    outer = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float)
    return triangulate([outer, circle((0, 0), radius, h)[::-1]], h)


def mushroom(h=0.1):
    """Cap on a stem; the sloped cap underside gives boundary degree 0."""
    cap = circle((0, 0.7), 1.0, h, 0.0, math.pi, endpoint=True)
    stem = np.array([[-1.0, 0.7], [-0.3, 0.0], [-0.3, -1.0], [0.3, -1.0], [0.3, 0.0], [1.0, 0.7]])
    poly = np.vstack([stem[2:5], cap, stem[1:2]])
    return triangulate([poly], h)


def block_u(h=0.1):
    """U-shaped block with chamfered bottom corners."""
    c = 0.4
    poly = np.array(
        [
            [-1.5, c], [-1.5 + c, 0.0], [1.5 - c, 0.0], [1.5, c],
            [1.5, 2.0], [0.5, 2.0], [0.5, 0.7], [-0.5, 0.7], [-0.5, 2.0], [-1.5, 2.0],
        ]
    )
    return triangulate([poly], h)


def limit_cycle_example(h=0.06, inner=0.25, tilt=0.3, pair=((-0.25, 0.8), (0.25, 0.8))):
    """Annulus with a constructed cross field that has an attracting limit cycle.

    The crosses are tilted from the circular directions by
    ``-tilt * sin(2 pi s)``, ``s = (r - inner) / (1 - inner)``: aligned on both
    boundary circles, with a closed orbit at mid radius that neighbouring
    streamlines spiral onto.  A +1/-1 pair in the outer band supplies
    separatrices.  Returns ``(mesh, values)``.
    """
    m = annulus(h, inner=inner)
    z = m.vertices[:, 0] + 1j * m.vertices[:, 1]
    r = np.abs(z)
    s = (r - inner) / (1.0 - inner)
    u = (z / r) ** 4 * np.exp(-4j * tilt * np.sin(2 * math.pi * s))
    zp, zq = complex(*pair[0]), complex(*pair[1])
    u = u * (z - zp) / np.abs(z - zp) * np.conj((z - zq) / np.abs(z - zq))
    return m, u


def drop_with_hole(h=0.1, radius=0.35):
    """Teardrop with one right-angle tip around a circular hole (Euler characteristic 0)."""
    arc = circle((0, 0), 1.0, h, -0.25 * math.pi, 1.25 * math.pi, endpoint=True)
    tip = np.array([[0.0, -math.sqrt(2.0)]])
    left = np.linspace(arc[-1], tip[0], max(2, int(math.ceil(1.0 / h))), endpoint=False)[1:]
    right = np.linspace(tip[0], arc[0], max(2, int(math.ceil(1.0 / h))), endpoint=False)[1:]
    outer = np.vstack([arc, left, tip, right])
    return triangulate([outer, circle((0, 0.1), radius, h)[::-1]], h)


DOMAINS = {
    "square": square,
    "disk": disk,
    "half_disk": half_disk,
    "hexagon": hexagon,
    "lshape": lshape,
    "two_hole": two_hole,
    "annulus": annulus,
    "square_with_hole": square_with_hole,
    "mushroom": mushroom,
    "block_u": block_u,
    "drop_with_hole": drop_with_hole,
}


def unit_square_two_triangles():
    return TriMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
