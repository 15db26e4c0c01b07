"""Cartesian grids, their triangulation, and level-set interface geometry.

Every rectangular cell is split along its lower-left to upper-right diagonal
into a ``lower`` and an ``upper`` triangle.  Nodes are numbered row-major,
``node = j * (nx + 1) + i``; cells likewise, ``cell = j * nx + i``; and
triangle ``2 * cell + tag`` with ``tag`` 0 (lower) or 1 (upper).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MINUS, PLUS, INTERFACE = 0, 1, 2
KIND_NAMES = {MINUS: "NonInterfaceMinus", PLUS: "NonInterfacePlus", INTERFACE: "Interface"}

ROOT_TOL = 1e-12
DEGENERATE_FRACTION = 1e-10


class GeometryError(ValueError):
    """Raised for inconsistent or under-resolved interface geometry."""


class OutOfDomainError(ValueError):
    """Raised when a position lies outside the closed grid box."""


@dataclass(frozen=True)
class CartesianGrid:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need at least 2 cells per axis, got {self.nx}x{self.ny}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("grid box must have positive extent")

    @classmethod
    def square(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "CartesianGrid":
        return cls(lo, hi, lo, hi, n, n)

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def node_coordinates(self) -> np.ndarray:
        """Return an ``(n_nodes, 2)`` array, j outer and i inner."""
        x = self.xmin + np.arange(self.nx + 1) * self.hx
        y = self.ymin + np.arange(self.ny + 1) * self.hy
        xx, yy = np.meshgrid(x, y)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def boundary_nodes(self) -> np.ndarray:
        i = np.arange(self.nx + 1)
        j = np.arange(self.ny + 1)
        ii, jj = np.meshgrid(i, j)
        on_bnd = (ii == 0) | (ii == self.nx) | (jj == 0) | (jj == self.ny)
        return np.flatnonzero(on_bnd.ravel())

    def control_volumes(self) -> np.ndarray:
        """Node-centred areas clipped to the box: full, half on edges, quarter at corners."""
        fx = np.ones(self.nx + 1)
        fx[[0, -1]] = 0.5
        fy = np.ones(self.ny + 1)
        fy[[0, -1]] = 0.5
        return self.hx * self.hy * np.outer(fy, fx).ravel()

    def cell_corners(self, cell):
        """Corner nodes of ``cell`` ordered (i,j), (i+1,j), (i+1,j+1), (i,j+1)."""
        cell = np.asarray(cell)
        ci, cj = cell % self.nx, cell // self.nx
        n00 = self.node_index(ci, cj)
        return np.stack([n00, n00 + 1, n00 + self.nx + 2, n00 + self.nx + 1], axis=-1)

    def locate_cell(self, positions):
        """Cell indices ``(ci, cj)`` and local coordinates in ``[0, 1]``.

        A position on a shared cell edge goes to the lower-index cell.
        """
        p = np.atleast_2d(np.asarray(positions, dtype=float))
        x, y = p[:, 0], p[:, 1]
        outside = (x < self.xmin) | (x > self.xmax) | (y < self.ymin) | (y > self.ymax)
        if np.any(outside | ~np.isfinite(x) | ~np.isfinite(y)):
            bad = p[np.flatnonzero(outside | ~np.isfinite(x) | ~np.isfinite(y))[0]]
            raise OutOfDomainError(f"position {tuple(bad)} is outside the domain")
        tx = (x - self.xmin) / self.hx
        ty = (y - self.ymin) / self.hy
        ci = np.clip(np.ceil(tx).astype(np.int64) - 1, 0, self.nx - 1)
        cj = np.clip(np.ceil(ty).astype(np.int64) - 1, 0, self.ny - 1)
        xi = np.clip(tx - ci, 0.0, 1.0)
        eta = np.clip(ty - cj, 0.0, 1.0)
        return ci, cj, xi, eta


class LevelSet:
    """Signed distance-like function; negative inside the conductor."""

    def __call__(self, x, y):
        raise NotImplementedError

    def at(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self(p[..., 0], p[..., 1])


@dataclass(frozen=True)
class Circle(LevelSet):
    center: tuple = (0.0, 0.0)
    radius: float = np.pi / 12

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def __call__(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 - self.radius ** 2


class FunctionLevelSet(LevelSet):
    """Wrap an arbitrary vectorised ``f(x, y)``."""

    def __init__(self, func: Callable):
        self.func = func

    def __call__(self, x, y):
        return self.func(x, y)


def _as_level_set(geom) -> LevelSet:
    if isinstance(geom, LevelSet):
        return geom
    if callable(geom):
        return FunctionLevelSet(geom)
    raise TypeError(f"cannot use {type(geom).__name__} as a level set")


def edge_roots(p1, p2, geom, tol: float = ROOT_TOL) -> np.ndarray:
    """Vectorised bisection for the zero of the level set on segments p1-p2."""
    ls = _as_level_set(geom)
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    p2 = np.atleast_2d(np.asarray(p2, dtype=float))
    f1 = ls.at(p1)
    f2 = ls.at(p2)
    on1 = f1 == 0.0
    on2 = f2 == 0.0
    if np.any((f1 * f2 > 0) & ~on1 & ~on2):
        raise GeometryError("edge_root: level set does not change sign on the segment")
    lo = np.zeros(len(p1))
    hi = np.ones(len(p1))
    flo = f1.copy()
    d = p2 - p1
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        fm = ls.at(p1 + mid[:, None] * d)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    t = np.where(on1, 0.0, np.where(on2, 1.0, t))
    return p1 + t[:, None] * d


def edge_root(p1, p2, geom, tol: float = ROOT_TOL) -> np.ndarray:
    """Point on segment ``p1``-``p2`` where the level set vanishes.

    Bisection on the segment parameter down to ``tol``.  An endpoint that is
    exactly on the interface is returned as is.
    """
    return edge_roots(p1, p2, geom, tol)[0]


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass
class InterfaceCut:
    """Straight-segment split of an interface triangle into T+ and T-."""

    triangle: int
    vertices: np.ndarray  # (3, 2)
    vertex_plus: np.ndarray  # (3,) bool
    D: np.ndarray
    E: np.ndarray
    minus_polygon: np.ndarray
    plus_polygon: np.ndarray
    area_minus: float
    area_plus: float
    normal: np.ndarray  # unit, from minus to plus side

    @property
    def area(self) -> float:
        return self.area_minus + self.area_plus

    @property
    def minor_fraction(self) -> float:
        return min(self.area_minus, self.area_plus) / self.area


def compute_cut(vertices, geom, triangle: int = -1, vertex_plus=None, edge_points=None) -> InterfaceCut:
    """Split a triangle with mixed corner signs along the chord DE.

    ``edge_points`` may supply precomputed roots keyed by local edge
    ``k`` (from vertex k to vertex k+1) so neighbours share cut points.
    """
    ls = _as_level_set(geom)
    v = np.asarray(vertices, dtype=float)
    if vertex_plus is None:
        vertex_plus = ls.at(v) >= 0
    vertex_plus = np.asarray(vertex_plus, dtype=bool)
    if vertex_plus.all() or not vertex_plus.any():
        raise GeometryError(f"triangle {triangle} is not an interface triangle")

    minus_poly, plus_poly, cuts = [], [], []
    for k in range(3):
        a, b = k, (k + 1) % 3
        (plus_poly if vertex_plus[a] else minus_poly).append(v[a])
        if vertex_plus[a] != vertex_plus[b]:
            if edge_points is not None and k in edge_points:
                q = np.asarray(edge_points[k], dtype=float)
            else:
                q = edge_root(v[a], v[b], ls)
            cuts.append(q)
            minus_poly.append(q)
            plus_poly.append(q)
    if len(cuts) != 2:
        raise GeometryError(f"triangle {triangle} has {len(cuts)} cut edges; interface under-resolved")
    D, E = cuts
    minus_poly = np.array(minus_poly)
    plus_poly = np.array(plus_poly)
    area = abs(polygon_area(v))
    area_minus = abs(polygon_area(minus_poly))
    # complement keeps the partition exact to round-off
    area_plus = area - area_minus

    t = E - D
    length = np.hypot(*t)
    if length == 0.0:
        n = np.array([np.nan, np.nan])
    else:
        n = np.array([-t[1], t[0]]) / length
        ref = v[np.flatnonzero(vertex_plus)].mean(axis=0)
        if np.dot(n, ref - D) < 0:
            n = -n
    return InterfaceCut(triangle, v, vertex_plus, D, E, minus_poly, plus_poly,
                        area_minus, area_plus, n)


class TriangulatedMesh:
    """Triangulated Cartesian grid classified against an interface.

    Attributes
    ----------
    nodes : (n_nodes, 2) array
    node_inside : (n_nodes,) bool
        Node lies in the conductor (level set < 1e-12 h^2).
    triangles : (n_tri, 3) int
        Vertex node indices, counter-clockwise.
    kind : (n_tri,) int
        ``MINUS``, ``PLUS`` or ``INTERFACE``.
    edges, edge_tris : (n_edge, 2) int
        Node pairs (sorted) and adjacent triangles (-1 on the boundary).
    edge_cut : (n_edge, 2) float
        Interface crossing of sign-change edges, NaN elsewhere.
    cuts : dict[int, InterfaceCut]
    """

    def __init__(self, grid: CartesianGrid, geom):
        self.grid = grid
        self.geom = _as_level_set(geom)
        g = grid
        self.nodes = g.node_coordinates()
        self.node_phi = np.asarray(self.geom.at(self.nodes), dtype=float)
        h2 = max(g.hx, g.hy) ** 2
        self.node_inside = self.node_phi < 1e-12 * h2

        cells = np.arange(g.n_cells)
        c = g.cell_corners(cells)
        lower = np.stack([c[:, 0], c[:, 1], c[:, 2]], axis=1)
        upper = np.stack([c[:, 0], c[:, 2], c[:, 3]], axis=1)
        self.triangles = np.empty((2 * g.n_cells, 3), dtype=np.int64)
        self.triangles[0::2] = lower
        self.triangles[1::2] = upper
        self.tri_cell = np.repeat(cells, 2)
        self.tri_tag = np.tile([0, 1], g.n_cells)
        self.tri_area = np.full(len(self.triangles), 0.5 * g.hx * g.hy)

        self._build_edges()
        self._classify()
        self._build_pieces()

    # -- construction ------------------------------------------------------
    def _build_edges(self):
        tri = self.triangles
        nt = len(tri)
        local = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        owner = np.tile(np.arange(nt), 3)
        lidx = np.repeat([0, 1, 2], nt)
        key = np.sort(local, axis=1)
        edges, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        self.edges = edges
        self.edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        counts = np.bincount(inv, minlength=len(edges))
        if counts.max() > 2:
            raise GeometryError("non-manifold triangulation")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.edge_tris[:, 0] = owner[order[starts]]
        two = counts == 2
        self.edge_tris[two, 1] = owner[order[starts[two] + 1]]
        # local edge k of triangle t -> global edge id
        self.tri_edges = np.empty((nt, 3), dtype=np.int64)
        self.tri_edges[owner, lidx] = inv
        self.interior_edges = np.flatnonzero(two)

        ins = self.node_inside
        self.edge_sign_change = ins[edges[:, 0]] != ins[edges[:, 1]]
        self.edge_cut = np.full((len(edges), 2), np.nan)
        sc = np.flatnonzero(self.edge_sign_change)
        if len(sc):
            p1 = self.nodes[edges[sc, 0]]
            p2 = self.nodes[edges[sc, 1]]
            # nodes flagged inside by the tolerance rule count as negative
            self.edge_cut[sc] = self._roots_with_node_rule(p1, p2, ins[edges[sc, 0]])

    def _roots_with_node_rule(self, p1, p2, first_inside):
        f1 = self.geom.at(p1)
        f2 = self.geom.at(p2)
        # an inside-flagged node sitting on the interface is its own root
        on1 = (f1 >= 0) & first_inside
        on2 = (f2 >= 0) & ~first_inside
        ok = ~(on1 | on2)
        out = np.where(on1[:, None], p1, p2).astype(float)
        if ok.any():
            out[ok] = edge_roots(p1[ok], p2[ok], self.geom)
        return out

    def _classify(self):
        ins = self.node_inside[self.triangles]
        n_in = ins.sum(axis=1)
        kind = np.full(len(self.triangles), INTERFACE, dtype=np.int64)
        kind[n_in == 3] = MINUS
        kind[n_in == 0] = PLUS
        cut_edges = self.edge_sign_change[self.tri_edges].sum(axis=1)
        bad = np.flatnonzero(cut_edges > 2)
        if len(bad):
            raise GeometryError(f"triangle {bad[0]} has more than 2 cut edges; interface under-resolved")

        self.cuts: dict[int, InterfaceCut] = {}
        self.reclassified: list[int] = []
        for t in np.flatnonzero(kind == INTERFACE):
            verts = self.nodes[self.triangles[t]]
            plus = ~self.node_inside[self.triangles[t]]
            pts = {k: self.edge_cut[self.tri_edges[t, k]] for k in range(3)
                   if self.edge_sign_change[self.tri_edges[t, k]]}
            cut = compute_cut(verts, self.geom, int(t), plus, pts)
            if cut.minor_fraction < DEGENERATE_FRACTION:
                kind[t] = PLUS if cut.area_plus > cut.area_minus else MINUS
                self.reclassified.append(int(t))
                continue
            self.cuts[int(t)] = cut
        self.kind = kind
        self.interface_edges = self.interior_edges[self.edge_sign_change[self.interior_edges]]

    def reclassify(self, t: int):
        """Demote an interface triangle to its majority side."""
        cut = self.cuts.pop(int(t))
        self.kind[t] = PLUS if cut.area_plus > cut.area_minus else MINUS
        self.reclassified.append(int(t))
        self._build_pieces()

    def _build_pieces(self):
        """Quadrature sub-triangles: one per regular triangle, fans of T+ and T- otherwise."""
        regular = np.flatnonzero(self.kind != INTERFACE)
        tri_list = [regular]
        side_list = [np.where(self.kind[regular] == MINUS, MINUS, PLUS)]
        vert_list = [self.nodes[self.triangles[regular]]]
        extra_t, extra_s, extra_v = [], [], []
        for t, cut in self.cuts.items():
            for side, poly in ((MINUS, cut.minus_polygon), (PLUS, cut.plus_polygon)):
                for k in range(1, len(poly) - 1):
                    extra_t.append(t)
                    extra_s.append(side)
                    extra_v.append([poly[0], poly[k], poly[k + 1]])
        if extra_t:
            tri_list.append(np.array(extra_t))
            side_list.append(np.array(extra_s))
            vert_list.append(np.array(extra_v))
        self.piece_tri = np.concatenate(tri_list).astype(np.int64)
        self.piece_side = np.concatenate(side_list).astype(np.int64)
        self.piece_verts = np.concatenate(vert_list)
        v = self.piece_verts
        self.piece_area = 0.5 * np.abs(
            (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
            - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))

    # -- queries -----------------------------------------------------------
    @property
    def interface_triangles(self) -> np.ndarray:
        return np.flatnonzero(self.kind == INTERFACE)

    def interface_nodes(self) -> np.ndarray:
        """Outside-conductor nodes of triangles cut by the interface."""
        tri = self.triangles[self.kind == INTERFACE]
        nodes = np.unique(tri)
        return nodes[~self.node_inside[nodes]]

    def interface_cell_nodes(self) -> np.ndarray:
        """Outside-conductor corners of rectangular cells with mixed corner signs."""
        corners = self.grid.cell_corners(np.arange(self.grid.n_cells))
        ins = self.node_inside[corners]
        mixed = ins.any(axis=1) & ~ins.all(axis=1)
        nodes = np.unique(corners[mixed])
        return nodes[~self.node_inside[nodes]]

    def locate(self, positions):
        """Cell, triangle and side (``MINUS``/``PLUS``) of each position.

        Points on the cell diagonal belong to the lower triangle; side is
        taken from the sign of the level set (zero counts as plus).
        """
        g = self.grid
        ci, cj, xi, eta = g.locate_cell(positions)
        cell = cj * g.nx + ci
        upper = eta > xi
        tri = 2 * cell + upper.astype(np.int64)
        p = np.atleast_2d(np.asarray(positions, dtype=float))
        side = np.where(self.geom.at(p) < 0, MINUS, PLUS)
        return cell, tri, side


def build_mesh(grid: CartesianGrid, geom) -> TriangulatedMesh:
    return TriangulatedMesh(grid, geom)
