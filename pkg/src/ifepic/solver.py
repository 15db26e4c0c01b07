"""Galerkin and partially penalized IFE solvers for ``-div(beta grad u) = f``.

The penalised scheme adds, on every interior edge crossed by the
interface, the consistency, symmetry (weighted by ``epsilon``) and
``sigma_e / |e|`` penalty terms of the jump of the IFE traces.  Jumps of
the IFE space vanish on all other edges, so only interface edges are
visited.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import BasisTable
from .mesh import MINUS, PLUS, TriangulatedMesh
from .quadrature import map_points, triangle_rule

logger = logging.getLogger(__name__)

GALERKIN, PPIFE = "galerkin", "ppife"
ANALYTIC, NODAL_DENSITY = "analytic", "nodal_density"
LUMPED, CONSISTENT = "lumped", "consistent"

_GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class SolverError(RuntimeError):
    """The linear solve missed its residual target."""

    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = PPIFE
    epsilon: int = 1
    sigma0: float = 10.0
    linear_tol: float = 1e-10
    max_iterations: int = 20000
    rhs_mode: str = ANALYTIC
    density_load: str = LUMPED

    def __post_init__(self):
        if self.scheme not in (GALERKIN, PPIFE):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.epsilon not in (-1, 0, 1):
            raise ValueError(f"epsilon must be -1, 0 or 1, got {self.epsilon!r}")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")
        if self.scheme == PPIFE and self.epsilon in (-1, 0) and self.sigma0 <= 0:
            raise ValueError("symmetric and incomplete PPIFE need sigma0 > 0")
        if not 0 < self.linear_tol < 1:
            raise ValueError("linear_tol must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.rhs_mode not in (ANALYTIC, NODAL_DENSITY):
            raise ValueError(f"unknown rhs_mode {self.rhs_mode!r}")
        if self.density_load not in (LUMPED, CONSISTENT):
            raise ValueError(f"unknown density_load {self.density_load!r}")

    @property
    def symmetric(self) -> bool:
        return self.scheme == GALERKIN or self.epsilon == -1


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_nodes: int

    def expand(self, u_free) -> np.ndarray:
        u = np.empty(self.n_nodes)
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u


@dataclass
class FieldSolution:
    phi: np.ndarray
    residual: float
    iterations: int


class PiecewiseSource:
    """Source term with separate expressions on the conductor and plasma sides."""

    def __init__(self, minus: Callable, plus: Callable):
        self.minus = minus
        self.plus = plus

    def __call__(self, x, y, side):
        return np.where(side == MINUS, self.minus(x, y), self.plus(x, y))


def _side_source(source, x, y, side):
    if isinstance(source, PiecewiseSource):
        return source(x, y, side)
    return np.broadcast_to(source(x, y), x.shape)


# -- volume ---------------------------------------------------------------

def element_matrices(mesh: TriangulatedMesh, basis: BasisTable) -> np.ndarray:
    """Exact local stiffness ``(n_tri, 3, 3)``; gradients are piecewise constant."""
    nt = len(mesh.triangles)
    area = np.zeros((nt, 2))
    regular = mesh.kind != 2
    area[regular, mesh.kind[regular]] = mesh.tri_area[regular]
    for t, cut in mesh.cuts.items():
        area[t, MINUS] = cut.area_minus
        area[t, PLUS] = cut.area_plus
    K = np.zeros((nt, 3, 3))
    for side in (MINUS, PLUS):
        G = basis.coef[:, side, :, 0:2]
        K += (basis.beta[:, side] * area[:, side])[:, None, None] * (G @ np.swapaxes(G, 1, 2))
    return K


def assemble_volume(mesh: TriangulatedMesh, basis: BasisTable) -> sp.csr_matrix:
    K = element_matrices(mesh, basis)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()


# -- interface edges ------------------------------------------------------

def _edge_segments(mesh: TriangulatedMesh, edges):
    """Split each edge at its interface crossing into two sub-segments."""
    p = mesh.nodes[mesh.edges[edges, 0]]
    q = mesh.nodes[mesh.edges[edges, 1]]
    c = mesh.edge_cut[edges]
    side_p = np.where(mesh.node_inside[mesh.edges[edges, 0]], MINUS, PLUS)
    side_q = np.where(mesh.node_inside[mesh.edges[edges, 1]], MINUS, PLUS)
    return [(p, c, side_p), (c, q, side_q)]


def _edge_traces(mesh, basis, edges):
    """Quadrature data for jumps and averaged fluxes on ``edges``.

    Yields per Gauss point: weight (len, ), jump vector J (len, 6) and
    averaged flux vector F (len, 6) over the DOFs [nodes(T1), nodes(T2)].
    """
    t1 = mesh.edge_tris[edges, 0]
    t2 = mesh.edge_tris[edges, 1]
    p = mesh.nodes[mesh.edges[edges, 0]]
    q = mesh.nodes[mesh.edges[edges, 1]]
    tang = q - p
    length = np.linalg.norm(tang, axis=1)
    normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
    # orient from T1 towards T2
    cen1 = mesh.nodes[mesh.triangles[t1]].mean(axis=1)
    flip = np.einsum("ij,ij->i", normal, cen1 - p) > 0
    normal[flip] *= -1.0

    out = []
    for a, b, side in _edge_segments(mesh, edges):
        seg = np.linalg.norm(b - a, axis=1)
        g1 = basis.gradients(t1, side) @ normal[:, :, None]
        g2 = basis.gradients(t2, side) @ normal[:, :, None]
        beta1 = basis.beta[t1, side]
        beta2 = basis.beta[t2, side]
        F = 0.5 * np.concatenate([beta1[:, None] * g1[:, :, 0], beta2[:, None] * g2[:, :, 0]], axis=1)
        for s in _GAUSS2:
            x = a + s * (b - a)
            J = np.concatenate([basis.evaluate(t1, side, x), -basis.evaluate(t2, side, x)], axis=1)
            out.append((0.5 * seg, J, F))
    return t1, t2, length, out


def _scatter_edge_blocks(mesh, t1, t2, blocks):
    dofs = np.concatenate([mesh.triangles[t1], mesh.triangles[t2]], axis=1)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = len(mesh.nodes)
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def penalty_parts(mesh: TriangulatedMesh, basis: BasisTable, sigma0: float):
    """Consistency, symmetry and penalty matrices on interface edges.

    Returned as ``(C, S, P)`` with ``a_eps = volume - C + eps * S + P``;
    ``S`` is the transpose of ``C``.
    """
    n = len(mesh.nodes)
    edges = mesh.interface_edges
    if len(edges) == 0:
        z = sp.csr_matrix((n, n))
        return z, z.copy(), z.copy()
    t1, t2, length, quad = _edge_traces(mesh, basis, edges)
    sigma_e = sigma0 * max(basis.beta_minus, basis.beta_plus)
    Cb = np.zeros((len(edges), 6, 6))
    Pb = np.zeros((len(edges), 6, 6))
    for w, J, F in quad:
        # row = test function, column = trial function
        Cb += w[:, None, None] * J[:, :, None] * F[:, None, :]
        Pb += (w * sigma_e / length)[:, None, None] * J[:, :, None] * J[:, None, :]
    C = _scatter_edge_blocks(mesh, t1, t2, Cb)
    P = _scatter_edge_blocks(mesh, t1, t2, Pb)
    return C, C.T.tocsr(), P


def assemble_penalty(mesh: TriangulatedMesh, basis: BasisTable, config: SolverConfig) -> sp.csr_matrix:
    if config.scheme != PPIFE:
        raise ValueError("penalty terms belong to the PPIFE scheme")
    C, S, P = penalty_parts(mesh, basis, config.sigma0)
    return (-C + config.epsilon * S + P).tocsr()


def edge_jumps(mesh: TriangulatedMesh, basis: BasisTable, u, edges=None) -> np.ndarray:
    """Largest trace jump of the finite element function ``u`` per edge."""
    if edges is None:
        edges = mesh.interior_edges
    edges = np.asarray(edges)
    t1 = mesh.edge_tris[edges, 0]
    t2 = mesh.edge_tris[edges, 1]
    u = np.asarray(u, dtype=float)
    u1 = u[mesh.triangles[t1]]
    u2 = u[mesh.triangles[t2]]
    p = mesh.nodes[mesh.edges[edges, 0]]
    q = mesh.nodes[mesh.edges[edges, 1]]
    cut = mesh.edge_cut[edges]
    has_cut = np.isfinite(cut[:, 0])
    mid = np.where(has_cut[:, None], cut, 0.5 * (p + q))
    worst = np.zeros(len(edges))
    side_p = np.where(mesh.node_inside[mesh.edges[edges, 0]], MINUS, PLUS)
    side_q = np.where(mesh.node_inside[mesh.edges[edges, 1]], MINUS, PLUS)
    for x, side in ((p, side_p), (q, side_q), (mid, side_p), (mid, side_q)):
        v1 = np.sum(basis.evaluate(t1, side, x) * u1, axis=1)
        v2 = np.sum(basis.evaluate(t2, side, x) * u2, axis=1)
        worst = np.maximum(worst, np.abs(v1 - v2))
    return worst


# -- load -----------------------------------------------------------------

def interpolate_nodal(mesh: TriangulatedMesh, values, tri, points) -> np.ndarray:
    """Continuous piecewise-linear interpolant of nodal ``values``."""
    v = mesh.nodes[mesh.triangles[tri]]
    det = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
           - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))
    shape = points.shape[:-1]
    pts = points.reshape(len(tri), -1, 2)
    dx = pts[..., 0] - v[:, 0:1, 0]
    dy = pts[..., 1] - v[:, 0:1, 1]
    l1 = (dx * (v[:, 2:3, 1] - v[:, 0:1, 1]) - dy * (v[:, 2:3, 0] - v[:, 0:1, 0])) / det[:, None]
    l2 = (dy * (v[:, 1:2, 0] - v[:, 0:1, 0]) - dx * (v[:, 1:2, 1] - v[:, 0:1, 1])) / det[:, None]
    l0 = 1.0 - l1 - l2
    f = np.asarray(values, dtype=float)[mesh.triangles[tri]]
    out = l0 * f[:, 0:1] + l1 * f[:, 1:2] + l2 * f[:, 2:3]
    return out.reshape(shape)


def assemble_load(mesh: TriangulatedMesh, basis: BasisTable, config: SolverConfig,
                  source=None, density=None, conductor_source: Optional[Callable] = None,
                  degree: int = 4) -> np.ndarray:
    """Right-hand side ``(f, v_i)`` for every node.

    ``rhs_mode == "analytic"``: ``source`` is ``f(x, y)`` or a
    :class:`PiecewiseSource`, integrated by quadrature on every side piece.

    ``rhs_mode == "nodal_density"``: ``density`` holds nodal values.  With
    ``density_load == "lumped"`` node ``i`` receives ``density[i]`` times its
    control volume, i.e. the charge deposited on it; with ``"consistent"``
    the piecewise-linear interpolant is integrated against the basis.  If
    ``conductor_source`` is given it supplies the conductor side, and the
    density carried by conductor nodes is discarded.
    """
    b = np.zeros(len(mesh.nodes))
    if config.rhs_mode == ANALYTIC:
        if source is None:
            raise ValueError("analytic rhs needs a source function")
        return _integrate(mesh, basis, b, degree, lambda x, y, side: _side_source(source, x, y, side))

    if density is None:
        raise ValueError("nodal_density rhs needs a density array")
    density = np.asarray(density, dtype=float)
    if density.shape != (len(mesh.nodes),):
        raise ValueError("density must have one value per node")
    plasma_only = conductor_source is not None
    if config.density_load == LUMPED:
        q = density * mesh.grid.control_volumes()
        if plasma_only:
            q = np.where(mesh.node_inside, 0.0, q)
            b = _integrate(mesh, basis, b, degree,
                           lambda x, y, side: np.where(side == MINUS, conductor_source(x, y), 0.0),
                           sides=(MINUS,))
        return b + q

    def f(x, y, side, tri):
        val = interpolate_nodal(mesh, density, tri, np.stack([x, y], axis=-1))
        if plasma_only:
            val = np.where(side == MINUS, conductor_source(x, y), val)
        return val

    return _integrate(mesh, basis, b, degree, f, with_tri=True)


def _integrate(mesh, basis, b, degree, f, sides=(MINUS, PLUS), with_tri=False):
    """Add ``sum_pieces int f * phi_i`` into ``b``."""
    keep = np.isin(mesh.piece_side, sides)
    tri = mesh.piece_tri[keep]
    side_p = mesh.piece_side[keep]
    bary, w = triangle_rule(degree)
    pts = map_points(mesh.piece_verts[keep], bary)
    wts = mesh.piece_area[keep][:, None] * w[None, :]
    side = np.broadcast_to(side_p[:, None], wts.shape)
    if with_tri:
        fv = f(pts[..., 0], pts[..., 1], side, tri)
    else:
        fv = f(pts[..., 0], pts[..., 1], side)
    fv = np.broadcast_to(fv, wts.shape)
    c = basis.coef[tri, side_p]
    phi = np.einsum("pid,pqd->pqi", c[:, :, 0:2], pts) + c[:, None, :, 2]
    local = np.einsum("pq,pqi->pi", wts * fv, phi)
    np.add.at(b, mesh.triangles[tri], local)
    return b


# -- system and solve -----------------------------------------------------

def assemble_matrix(mesh: TriangulatedMesh, basis: BasisTable, config: SolverConfig) -> sp.csr_matrix:
    A = assemble_volume(mesh, basis)
    if config.scheme == PPIFE:
        A = A + assemble_penalty(mesh, basis, config)
    return A.tocsr()


def apply_dirichlet(A, b, mesh: TriangulatedMesh, boundary) -> SparseSystem:
    """Eliminate grid-boundary nodes; ``boundary`` is ``g(x, y)`` or nodal values."""
    fixed = mesh.grid.boundary_nodes()
    n = len(mesh.nodes)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    if boundary is None:
        g = np.zeros(len(fixed))
    elif callable(boundary):
        xy = mesh.nodes[fixed]
        g = np.broadcast_to(np.asarray(boundary(xy[:, 0], xy[:, 1]), dtype=float), (len(fixed),)).copy()
    else:
        g = np.asarray(boundary, dtype=float)
        g = g[fixed] if g.shape == (n,) else g
    A = sp.csr_matrix(A)
    rhs = b[free] - A[free][:, fixed] @ g
    return SparseSystem(A[free][:, free].tocsr(), rhs, free, fixed, g, n)


def solve(system: SparseSystem, config: SolverConfig) -> FieldSolution:
    """Jacobi-preconditioned CG when symmetric, sparse LU otherwise."""
    A, b = system.matrix, system.rhs
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return FieldSolution(system.expand(np.zeros(len(b))), 0.0, 0)
    iterations = 0
    if config.symmetric:
        diag = A.diagonal()
        M = sp.diags(1.0 / np.where(diag != 0, diag, 1.0))

        def count(_):
            nonlocal iterations
            iterations += 1

        x, info = spla.cg(A, b, rtol=config.linear_tol, atol=0.0, maxiter=config.max_iterations,
                          M=M, callback=count)
    else:
        x = spla.spsolve(A.tocsc(), b)
        iterations = 1
    residual = float(np.linalg.norm(A @ x - b) / bnorm)
    if not np.isfinite(residual) or residual > config.linear_tol:
        raise SolverError(f"linear solve stalled at relative residual {residual:.3e} "
                          f"after {iterations} iterations", residual, iterations)
    logger.debug("solved %d unknowns: residual %.2e, %d iterations", len(b), residual, iterations)
    return FieldSolution(system.expand(x), residual, iterations)


def solve_field(mesh: TriangulatedMesh, basis: BasisTable, config: SolverConfig, *,
                source=None, density=None, conductor_source=None, boundary=None) -> FieldSolution:
    """Assemble, impose Dirichlet data and solve in one call."""
    A = assemble_matrix(mesh, basis, config)
    b = assemble_load(mesh, basis, config, source=source, density=density,
                      conductor_source=conductor_source)
    return solve(apply_dirichlet(A, b, mesh, boundary), config)


def evaluate(mesh: TriangulatedMesh, basis: BasisTable, phi, points) -> np.ndarray:
    """Value of the IFE function with nodal values ``phi`` at ``points``."""
    _, tri, side = mesh.locate(points)
    vals = basis.evaluate(tri, side, np.atleast_2d(points))
    return np.sum(vals * np.asarray(phi)[mesh.triangles[tri]], axis=1)


def dump_matrix(A, path) -> None:
    """Write ``A`` as ``row col value`` lines with 0-based indices."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="\n") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.16e}\n")
