"""Linear immersed finite element basis on triangles.

Each local basis function is stored as two linear pieces ``a x + b y + c``,
one per side of the interface.  On regular triangles both pieces are the
ordinary barycentric shape function, so assembly and gather code can treat
every triangle alike through :attr:`BasisTable.coef`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import INTERFACE, MINUS, PLUS, InterfaceCut, TriangulatedMesh

COND_LIMIT = 1e12


class DegenerateCutError(ArithmeticError):
    """The interface constraint system is singular or badly conditioned."""


@dataclass(frozen=True)
class IFELocalBasis:
    """Piecewise-linear basis of one interface triangle.

    ``coef_plus[i]`` and ``coef_minus[i]`` hold ``(a, b, c)`` of local
    function ``i`` on T+ and T-.
    """

    triangle: int
    coef_plus: np.ndarray
    coef_minus: np.ndarray
    beta_minus: float
    beta_plus: float

    def _coef(self, side):
        if side in (PLUS, "plus", "+"):
            return self.coef_plus
        if side in (MINUS, "minus", "-"):
            return self.coef_minus
        raise ValueError(f"unknown side {side!r}")

    def eval(self, i: int, position, side) -> float:
        a, b, c = self._coef(side)[i]
        x, y = np.asarray(position, dtype=float)
        return a * x + b * y + c

    def grad(self, i: int, side) -> np.ndarray:
        return self._coef(side)[i, :2].copy()


def standard_coefficients(vertices) -> np.ndarray:
    """``(..., 3, 3)`` linear shape coefficients, row i = (a_i, b_i, c_i)."""
    v = np.asarray(vertices, dtype=float)
    M = np.concatenate([v, np.ones(v.shape[:-1] + (1,))], axis=-1)
    return np.swapaxes(np.linalg.inv(M), -1, -2)


def _constraint_systems(vertices, vertex_plus, D, E, normal, beta_minus, beta_plus):
    """Batched 6x6 constraint matrices in a shifted and scaled local frame."""
    v = np.asarray(vertices, dtype=float)
    k = len(v)
    origin = v[:, 0, :]
    scale = np.max(np.linalg.norm(v - origin[:, None, :], axis=2), axis=1)
    loc = (v - origin[:, None, :]) / scale[:, None, None]
    d = (D - origin) / scale[:, None]
    e = (E - origin) / scale[:, None]

    A = np.zeros((k, 6, 6))
    for j in range(3):
        row = np.concatenate([loc[:, j, :], np.ones((k, 1))], axis=1)
        plus = vertex_plus[:, j]
        A[plus, j, 0:3] = row[plus]
        A[~plus, j, 3:6] = row[~plus]
    for r, p in ((3, d), (4, e)):
        row = np.concatenate([p, np.ones((k, 1))], axis=1)
        A[:, r, 0:3] = row
        A[:, r, 3:6] = -row
    bmax = max(beta_minus, beta_plus)
    A[:, 5, 0:2] = (beta_plus / bmax) * normal
    A[:, 5, 3:5] = -(beta_minus / bmax) * normal
    return A, origin, scale


def _to_global(local, origin, scale):
    """Map local-frame (alpha, beta, gamma) rows to global (a, b, c)."""
    a = local[..., 0] / scale[:, None]
    b = local[..., 1] / scale[:, None]
    c = local[..., 2] - a * origin[:, 0:1] - b * origin[:, 1:2]
    return np.stack([a, b, c], axis=-1)


def _solve_cuts(cuts, beta_minus, beta_plus):
    verts = np.array([c.vertices for c in cuts])
    vplus = np.array([c.vertex_plus for c in cuts])
    D = np.array([c.D for c in cuts])
    E = np.array([c.E for c in cuts])
    n = np.array([c.normal for c in cuts])
    A, origin, scale = _constraint_systems(verts, vplus, D, E, n, beta_minus, beta_plus)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(A)
    ok = np.isfinite(cond) & (cond <= COND_LIMIT)
    rhs = np.zeros((len(cuts), 6, 3))
    rhs[:, 0:3, :] = np.eye(3)
    sol = np.full((len(cuts), 6, 3), np.nan)
    if ok.any():
        sol[ok] = np.linalg.solve(A[ok], rhs[ok])
    # sol[:, :, i] = (a+, b+, c+, a-, b-, c-) of function i in the local frame
    plus = _to_global(np.swapaxes(sol[:, 0:3, :], 1, 2), origin, scale)
    minus = _to_global(np.swapaxes(sol[:, 3:6, :], 1, 2), origin, scale)
    return plus, minus, ok, cond


def build_local_basis(cut: InterfaceCut, beta_minus: float, beta_plus: float) -> IFELocalBasis:
    """Solve the nodal, continuity and flux constraints for one cut triangle."""
    if beta_minus <= 0 or beta_plus <= 0:
        raise ValueError("conductivities must be positive")
    plus, minus, ok, cond = _solve_cuts([cut], beta_minus, beta_plus)
    if not ok[0]:
        raise DegenerateCutError(
            f"triangle {cut.triangle}: constraint system condition {cond[0]:.3e} exceeds {COND_LIMIT:g}")
    return IFELocalBasis(cut.triangle, plus[0], minus[0], float(beta_minus), float(beta_plus))


def constraint_residuals(basis: IFELocalBasis, cut: InterfaceCut) -> np.ndarray:
    """Residuals of the six defining equations, shape ``(3, 6)``.

    Columns: three nodal conditions, value continuity at D and E, flux jump
    (divided by ``max(beta)``).
    """
    out = np.zeros((3, 6))
    bmax = max(basis.beta_minus, basis.beta_plus)
    for i in range(3):
        for j in range(3):
            side = PLUS if cut.vertex_plus[j] else MINUS
            out[i, j] = basis.eval(i, cut.vertices[j], side) - (1.0 if i == j else 0.0)
        for k, p in enumerate((cut.D, cut.E)):
            out[i, 3 + k] = basis.eval(i, p, PLUS) - basis.eval(i, p, MINUS)
        out[i, 5] = (basis.beta_plus * basis.grad(i, PLUS) @ cut.normal
                     - basis.beta_minus * basis.grad(i, MINUS) @ cut.normal) / bmax
    return out


class BasisTable:
    """Basis coefficients for every triangle of a mesh and one (beta-, beta+) pair.

    ``coef[t, side, i] = (a, b, c)``; ``beta[t, side]`` is the coefficient of
    that piece.  Interface triangles whose constraint system is too badly
    conditioned are demoted on the mesh and listed in ``degenerate``.
    """

    def __init__(self, mesh: TriangulatedMesh, beta_minus: float, beta_plus: float):
        if beta_minus <= 0 or beta_plus <= 0:
            raise ValueError("conductivities must be positive")
        self.mesh = mesh
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)
        self.degenerate: list[int] = []

        std = standard_coefficients(mesh.nodes[mesh.triangles])
        self.coef = np.repeat(std[:, None, :, :], 2, axis=1)
        self.beta = np.empty((len(mesh.triangles), 2))
        self.beta[:, MINUS] = beta_minus
        self.beta[:, PLUS] = beta_plus

        ids = sorted(mesh.cuts)
        if ids:
            cuts = [mesh.cuts[t] for t in ids]
            plus, minus, ok, _ = _solve_cuts(cuts, beta_minus, beta_plus)
            for t, good, cp, cm in zip(ids, ok, plus, minus):
                if good:
                    self.coef[t, PLUS] = cp
                    self.coef[t, MINUS] = cm
                else:
                    self.degenerate.append(t)
            for t in self.degenerate:
                mesh.reclassify(t)
        # regular triangles carry one conductivity on both pieces
        kind = mesh.kind
        self.beta[kind == MINUS, PLUS] = beta_minus
        self.beta[kind == PLUS, MINUS] = beta_plus

    def local(self, t: int) -> IFELocalBasis:
        return IFELocalBasis(int(t), self.coef[t, PLUS].copy(), self.coef[t, MINUS].copy(),
                             self.beta_minus, self.beta_plus)

    def evaluate(self, tri, side, points) -> np.ndarray:
        """Values of the three local functions at ``points``, shape ``(n, 3)``."""
        c = self.coef[tri, side]  # (n, 3, 3)
        p = np.atleast_2d(points)
        return c[:, :, 0] * p[:, 0:1] + c[:, :, 1] * p[:, 1:2] + c[:, :, 2]

    def gradients(self, tri, side) -> np.ndarray:
        return self.coef[tri, side, :, 0:2]


def build_basis_table(mesh: TriangulatedMesh, beta_minus: float, beta_plus: float) -> BasisTable:
    return BasisTable(mesh, beta_minus, beta_plus)
