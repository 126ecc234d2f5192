"""P1 finite elements: assembly, Dirichlet solves, backward-Euler diffusion.

Complex fields are handled as two real right-hand sides against a single
real sparse factorization.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)


class FactorizationError(RuntimeError):
    pass


def assemble_p1(mesh, lumped=True):
    """Stiffness matrix K and mass matrix M (both CSR).

    K[i, j] = sum over triangles of area * grad(phi_i) . grad(phi_j).  The
    mass matrix is row-sum lumped (diagonal) unless ``lumped=False``.
    """
    v = mesh.vertices
    t = mesh.triangles
    area = mesh.triangle_areas
    if np.any(area < 1e-14 * area.mean()):
        raise ValueError("degenerate triangle in assembly")
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    # edge vectors opposite each vertex; grad(phi_k) = rot90(e_k) / (2A)
    e = np.stack([p2 - p1, p0 - p2, p1 - p0], axis=1)
    local = np.einsum("fid,fjd->fij", e, e) / (4.0 * area)[:, None, None]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    if not lumped:
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
        M = sp.csr_matrix(((area[:, None, None] * ref).ravel(), (rows, cols)), shape=(n, n))
        M.sum_duplicates()
        return K, M
    mass = np.zeros(n)
    np.add.at(mass, t.ravel(), np.repeat(area / 3.0, 3))
    M = sp.diags(mass, format="csr")
    return K, M


def _factor(A):
    try:
        lu = splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from exc
    d = lu.U.diagonal()
    if np.any(d <= 0):
        raise FactorizationError("matrix is not positive definite")
    return lu


def _solve(lu, rhs):
    if np.iscomplexobj(rhs):
        return lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
    return lu.solve(np.ascontiguousarray(rhs))


class DirichletSolver:
    """Factorization of an operator restricted to interior nodes."""

    def __init__(self, mesh, A):
        self.mesh = mesh
        self.inner = mesh.interior_nodes
        self.bnd = mesh.boundary_nodes
        if len(self.inner) == 0:
            raise ValueError("mesh has no interior nodes")
        A = sp.csr_matrix(A)
        self.A_ii = A[self.inner][:, self.inner]
        self.A_ib = A[self.inner][:, self.bnd]
        self.lu = _factor(self.A_ii)

    def solve_interior(self, rhs_inner):
        return _solve(self.lu, rhs_inner)


class DiffusionOperator:
    """Backward-Euler step ``(M + tau K) v = M u`` with Dirichlet data.

    The interior block is factored once; :meth:`step` may be called any
    number of times (and concurrently) without refactoring.
    """

    def __init__(self, mesh, tau, K=None, M=None):
        if tau <= 0:
            raise ValueError("tau must be positive")
        if K is None or M is None:
            K, M = assemble_p1(mesh)
        self.mesh = mesh
        self.tau = float(tau)
        self.K, self.M = K, M
        self._mass = M.diagonal()
        self._solver = DirichletSolver(mesh, M + self.tau * K)
        self.inner = self._solver.inner
        self.bnd = self._solver.bnd
        self._tauK_ib = (self.tau * K)[self.inner][:, self.bnd]

    def step(self, u, g_bnd):
        """One diffusion step; ``g_bnd`` holds values at ``self.bnd`` order."""
        u = np.asarray(u)
        if u.shape != (self.mesh.n_vertices,):
            raise ValueError("field length does not match mesh")
        rhs = self._mass[self.inner] * u[self.inner] - self._tauK_ib @ g_bnd
        out = np.empty(self.mesh.n_vertices, dtype=np.result_type(u, g_bnd, float))
        out[self.inner] = self._solver.solve_interior(rhs)
        out[self.bnd] = g_bnd
        return out


def diffuse_step(op, u, bc):
    """Apply ``op`` to ``u`` with boundary data from ``bc`` (exact on boundary)."""
    g = _boundary_vector(op.bnd, bc)
    return op.step(u, g)


def _boundary_vector(bnd, bc):
    if hasattr(bc, "nodes"):
        if len(bc.nodes) == len(bnd) and np.array_equal(bc.nodes, bnd):
            return bc.values
        return np.array([bc[i] for i in bnd])
    if isinstance(bc, dict):
        missing = [i for i in bnd.tolist() if i not in bc]
        if missing:
            raise ValueError(f"boundary values missing for {len(missing)} boundary nodes")
        return np.array([bc[i] for i in bnd.tolist()])
    arr = np.asarray(bc)
    if arr.shape == bnd.shape:
        return arr
    return arr[bnd]


def solve_dirichlet(mesh, boundary_values, K=None):
    """Discrete harmonic extension: (K u)_interior = 0, u = data on boundary."""
    if K is None:
        K, _ = assemble_p1(mesh)
    solver = DirichletSolver(mesh, K)
    g = _boundary_vector(solver.bnd, boundary_values)
    dtype = complex if np.iscomplexobj(g) else float
    out = np.empty(mesh.n_vertices, dtype=dtype)
    out[solver.bnd] = g
    out[solver.inner] = solver.solve_interior(-(solver.A_ib @ g))
    return out


def estimate_lambda1(mesh, tol=1e-6, max_iter=500, K=None, M=None, return_vector=False):
    """Smallest Dirichlet eigenvalue of K v = lambda M v by inverse iteration.

    Iterates until the relative residual ||K v - lambda M v|| / ||K v|| drops
    below ``tol``.
    """
    if K is None or M is None:
        K, M = assemble_p1(mesh)
    solver = DirichletSolver(mesh, K)
    inner = solver.inner
    Kii = solver.A_ii
    Mii = sp.csr_matrix(M)[inner][:, inner]
    rng = np.random.default_rng(0)
    v = 1.0 + 0.01 * rng.standard_normal(len(inner))
    lam = np.nan
    for it in range(1, max_iter + 1):
        v = solver.solve_interior(Mii @ v)
        v /= np.sqrt(v @ (Mii @ v))
        Kv = Kii @ v
        lam = float(v @ Kv)
        res = np.linalg.norm(Kv - lam * (Mii @ v)) / np.linalg.norm(Kv)
        if res < tol:
            break
    else:
        log.warning("inverse iteration stopped at residual %.2e", res)
    log.debug("lambda1 = %.6f after %d iterations", lam, it)
    if return_vector:
        full = np.zeros(mesh.n_vertices)
        full[inner] = v
        return lam, full
    return lam


def dirichlet_energy(K, u):
    """0.5 * u^H K u for real or complex nodal fields."""
    u = np.asarray(u)
    if np.iscomplexobj(u):
        return 0.5 * float(u.real @ (K @ u.real) + u.imag @ (K @ u.imag))
    return 0.5 * float(u @ (K @ u))
