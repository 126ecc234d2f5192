"""Ginzburg-Landau layer: MBO threshold dynamics, canonical harmonic maps,
energy diagnostics and a direct descent minimizer used for cross-checking.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fem
from .mesh import hole_points, point_in_polygon

log = logging.getLogger(__name__)

_GOLDEN = math.pi * (3.0 - math.sqrt(5.0))


@dataclass
class MBOParams:
    tau_scale: float = 1.0
    delta: float = 1e-4
    max_iter: int = 500

    def __post_init__(self):
        if self.tau_scale <= 0 or self.delta <= 0:
            raise ValueError("tau_scale and delta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class RepresentationField:
    """Complex nodal field u on ``mesh`` (a cross is ``u**(1/4)``)."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("field length does not match mesh")

    def to_json(self):
        return {
            "n_vertices": int(self.mesh.n_vertices),
            "values": [[float(z.real), float(z.imag)] for z in self.values],
        }

    @classmethod
    def from_json(cls, mesh, data):
        vals = np.asarray(data["values"], dtype=float)
        if vals.shape != (mesh.n_vertices, 2) or int(data.get("n_vertices", -1)) != mesh.n_vertices:
            raise ValueError("field file does not match mesh")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite field values")
        return cls(mesh, vals[:, 0] + 1j * vals[:, 1])


@dataclass
class SingularityConfig:
    """Prescribed singularity locations with representation-field degrees."""

    locations: list
    degrees: list

    def __post_init__(self):
        self.locations = [tuple(map(float, p)) for p in self.locations]
        self.degrees = [int(d) for d in self.degrees]
        if len(self.locations) != len(self.degrees):
            raise ValueError("locations and degrees differ in length")

    @property
    def total_degree(self):
        return sum(self.degrees)

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text())
        return cls([(d["x"], d["y"]) for d in data], [d["degree"] for d in data])

    def dump(self):
        return [{"x": x, "y": y, "degree": d} for (x, y), d in zip(self.locations, self.degrees)]


@dataclass
class MBOResult:
    field: RepresentationField
    iterations: int
    converged: bool
    tau: float
    trace: list = field(default_factory=list)
    degenerate_nodes: list = field(default_factory=list)


def normalize_field(u, flags=None):
    """Pointwise projection onto the unit circle.

    Nodes with modulus below 1e-14 are nudged by 1e-12 in a fixed,
    node-dependent direction before normalising; their ids are appended to
    ``flags`` when a list is given.
    """
    u = np.array(u, dtype=complex)
    mod = np.abs(u)
    bad = np.flatnonzero(mod < 1e-14)
    if len(bad):
        u[bad] = u[bad] + 1e-12 * np.exp(1j * _GOLDEN * (bad + 1))
        mod[bad] = np.abs(u[bad])
        log.info("normalize_field: perturbed %d near-zero nodes", len(bad))
        if flags is not None:
            flags.extend(bad.tolist())
    # values already unit to rounding are kept bit for bit
    mod[np.abs(mod - 1.0) <= 4 * np.finfo(float).eps] = 1.0
    return u / mod


def harmonic_init(mesh, bc, K=None):
    """Normalised harmonic extension of the boundary data."""
    return normalize_field(fem.solve_dirichlet(mesh, bc, K=K))


def random_init(mesh, bc, seed=0):
    """Uniformly random unit field with the boundary data imposed."""
    rng = np.random.default_rng(seed)
    u = np.exp(2j * np.pi * rng.random(mesh.n_vertices))
    u[bc.nodes] = bc.values
    return u


def convergence_threshold(mesh, delta):
    return 2.0 * len(mesh.interior_nodes) * delta


def mbo_minimize(mesh, bc, params=None, init=None, K=None, M=None, lambda1=None, callback=None):
    """Diffusion-generated (MBO) minimisation of the Ginzburg-Landau energy.

    Alternates one backward-Euler diffusion step of length
    ``tau = tau_scale / lambda1`` with pointwise renormalisation until
    ``||u_k - u_{k-1}||_2 <= 2 n delta`` (n interior nodes) or ``max_iter``.
    """
    params = params or MBOParams()
    if K is None or M is None:
        K, M = fem.assemble_p1(mesh)
    if lambda1 is None:
        lambda1 = fem.estimate_lambda1(mesh, K=K, M=M)
    tau = params.tau_scale / lambda1
    op = fem.DiffusionOperator(mesh, tau, K, M)
    g = fem._boundary_vector(op.bnd, bc)

    if init is None:
        u = harmonic_init(mesh, bc, K)
    else:
        u = np.array(getattr(init, "values", init), dtype=complex)
        if not np.allclose(u[op.bnd], g, atol=1e-12):
            raise ValueError("initial field does not match the boundary data")
        if not np.allclose(np.abs(u), 1.0, atol=1e-12):
            raise ValueError("initial field is not unit modulus")

    thresh = convergence_threshold(mesh, params.delta)
    flags = []
    trace = []
    converged = False
    k = 0
    while k < params.max_iter:
        u_new = normalize_field(op.step(u, g), flags)
        k += 1
        diff = float(np.linalg.norm(u_new - u))
        u = u_new
        trace.append((k, diff, fem.dirichlet_energy(K, u)))
        if callback is not None:
            callback(k, u, diff)
        if diff <= thresh:
            converged = True
            break
    if not converged:
        log.warning("MBO did not converge in %d iterations (last change %.3g > %.3g)", k, diff, thresh)
    return MBOResult(RepresentationField(mesh, u), k, converged, tau, trace, flags)


def mbo_step(mesh, bc, u, tau, K=None, M=None):
    """A single diffusion + renormalisation step (no factorisation reuse)."""
    op = fem.DiffusionOperator(mesh, tau, K, M)
    return normalize_field(fem.diffuse_step(op, np.asarray(u, dtype=complex), bc))


# -- canonical harmonic maps ---------------------------------------------------


def _unit_power(z, a, d):
    w = z - a
    return (w / np.abs(w)) ** d


def canonical_harmonic_map(mesh, bc, config, hole_turns=None, start=0, K=None):
    """Canonical harmonic map for prescribed singularities.

    Builds ``u0 = exp(i phi) * prod_j ((z - a_j)/|z - a_j|)**d_j`` where phi is
    the discrete harmonic extension of the continuously unwrapped boundary
    phase.  On multiply connected domains each hole contributes one extra
    factor centred inside the hole so the boundary phase is single valued;
    ``hole_turns`` adds ``2 pi m`` to the phase on hole ``m``'s loop (these
    integers select among the harmonic maps sharing the same data).
    ``start`` is the loop position where unwrapping begins.
    """
    from .mesh import effective_degree

    z_nodes = mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]
    locs = np.array([complex(x, y) for x, y in config.locations], dtype=complex)
    need = effective_degree(mesh, bc)
    if config.total_degree != need:
        raise ValueError(f"singularity degrees sum to {config.total_degree} but the boundary data needs {need}")
    scale = mesh.diameter
    for j, a in enumerate(locs):
        if np.any(np.abs(locs[:j] - a) < 1e-9 * scale):
            raise ValueError("singularity locations must be distinct")
        if mesh.locate((a.real, a.imag))[0] < 0:
            raise ValueError(f"singularity {a} lies outside the domain")
        for poly in mesh.boundary_polylines():
            if _dist_to_polygon(a, poly) < 1e-9 * scale:
                raise ValueError(f"singularity {a} lies on the boundary")
        if np.min(np.abs(z_nodes - a)) < 1e-12 * scale:
            raise ValueError(f"singularity {a} coincides with a mesh node")

    holes = [complex(*p) for p in hole_points(mesh)]
    hole_loops = [lp for lp in mesh.boundary_loops if not lp.is_outer]
    turns = list(hole_turns or [0] * len(holes))
    if len(turns) != len(holes):
        raise ValueError("one hole_turns entry per hole is required")

    def phase_factor(z, hole_deg):
        out = np.ones_like(z)
        for a, d in zip(locs, config.degrees):
            out *= _unit_power(z, a, d)
        for b, m in zip(holes, hole_deg):
            out *= _unit_power(z, b, m)
        return out

    hole_deg = []
    for lp in hole_loops:
        ids = np.asarray(lp.vertex_ids)
        w = np.angle(np.roll(bc.full(mesh.n_vertices)[ids], -1) / bc.full(mesh.n_vertices)[ids]).sum()
        hole_deg.append(-int(round(w / (2 * math.pi))))

    phi0 = {}
    g_full = bc.full(mesh.n_vertices)
    hole_index = 0
    for lp in mesh.boundary_loops:
        ids = np.asarray(lp.vertex_ids)
        ids = np.roll(ids, -(start % len(ids)))
        h = g_full[ids] / phase_factor(z_nodes[ids], hole_deg)
        ph = np.unwrap(np.angle(h))
        if abs(ph[-1] + np.angle(h[0] / h[-1]) - ph[0]) > 1e-6:
            raise ValueError("boundary phase winds; degrees do not match this loop")
        if not lp.is_outer:
            ph = ph + 2 * math.pi * turns[hole_index]
            hole_index += 1
        for i, p in zip(ids.tolist(), ph.tolist()):
            phi0[i] = p
    phi = fem.solve_dirichlet(mesh, phi0, K=K)
    u0 = np.exp(1j * phi) * phase_factor(z_nodes, hole_deg)
    u0 = u0 / np.abs(u0)
    return RepresentationField(mesh, u0)


def _dist_to_polygon(a, poly):
    p = np.array([a.real, a.imag])
    b = np.roll(poly, -1, axis=0)
    ab = b - poly
    t = np.clip(np.einsum("ij,ij->i", p - poly, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    return float(np.min(np.linalg.norm(poly + t[:, None] * ab - p, axis=1)))


# -- energies -----------------------------------------------------------------


def default_eps(mesh):
    return 2.0 * mesh.mean_edge_length


def gl_energy(u, eps, K=None, M=None):
    """``(dirichlet, penalty)`` parts of the Ginzburg-Landau energy."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mesh = u.mesh
    if K is None or M is None:
        K, M = fem.assemble_p1(mesh)
    vals = u.values
    dirichlet = fem.dirichlet_energy(K, vals)
    penalty = float(M.diagonal() @ (np.abs(vals) ** 2 - 1.0) ** 2) / (4.0 * eps**2)
    return dirichlet, penalty


def gl_total(values, eps, K, mass):
    return fem.dirichlet_energy(K, values) + float(mass @ (np.abs(values) ** 2 - 1.0) ** 2) / (4.0 * eps**2)


def gl_gradient(values, eps, K, mass):
    """Gradient with respect to (Re u, Im u), packed as a complex vector."""
    return K @ values + (mass * (np.abs(values) ** 2 - 1.0) / eps**2) * values


@dataclass
class StepParams:
    delta: float = 1e-4
    max_iter: int = 2000
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    precondition: bool = True


@dataclass
class DirectResult:
    field: RepresentationField
    raw: np.ndarray
    iterations: int
    converged: bool
    energies: list = field(default_factory=list)
    line_search_failed: bool = False


def direct_minimize_gl(mesh, bc, eps=None, init=None, step_params=None, K=None, M=None):
    """Descent with Armijo backtracking on the Ginzburg-Landau energy.

    The search direction is the gradient in the metric ``K + M / eps**2``
    (plain Euclidean gradient when ``precondition`` is off).  Stops on the
    same ``||u_k - u_{k-1}|| <= 2 n delta`` rule as :func:`mbo_minimize`.
    """
    sp_ = step_params or StepParams()
    eps = default_eps(mesh) if eps is None else eps
    if eps <= 0:
        raise ValueError("eps must be positive")
    if K is None or M is None:
        K, M = fem.assemble_p1(mesh)
    mass = M.diagonal()
    inner = mesh.interior_nodes
    u = harmonic_init(mesh, bc, K) if init is None else np.array(getattr(init, "values", init), dtype=complex)
    u[bc.nodes] = bc.values
    solver = fem.DirichletSolver(mesh, K + M / eps**2) if sp_.precondition else None

    thresh = convergence_threshold(mesh, sp_.delta)
    E = gl_total(u, eps, K, mass)
    energies = [E]
    converged = failed = False
    it = 0
    step = 1.0
    while it < sp_.max_iter:
        grad = gl_gradient(u, eps, K, mass)[inner]
        d = -solver.solve_interior(grad) if solver else -grad
        slope = float(np.real(np.vdot(grad, d)))
        if slope >= 0:
            failed = True
            break
        t = min(1.0, 2.0 * step)
        for _ in range(sp_.max_backtracks):
            trial = u.copy()
            trial[inner] += t * d
            E_trial = gl_total(trial, eps, K, mass)
            if E_trial <= E + sp_.armijo * t * slope:
                break
            t *= sp_.shrink
        else:
            failed = True
            log.warning("direct minimiser: line search failed at iteration %d", it)
            break
        it += 1
        diff = float(np.linalg.norm(trial - u))
        u, E, step = trial, E_trial, t
        energies.append(E)
        if diff <= thresh:
            converged = True
            break
    return DirectResult(RepresentationField(mesh, normalize_field(u)), u, it, converged, energies, failed)
