"""Particle loading, charge deposit, field gather and the Boris push."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisTable
from .mesh import MINUS, CartesianGrid, GeometryError, LevelSet, TriangulatedMesh

STANDARD, IMPROVED = "standard", "improved"


@dataclass
class ParticleSet:
    positions: np.ndarray
    velocities: np.ndarray
    charges: np.ndarray
    masses: np.ndarray
    active: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        n = len(self.positions)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(n, 2)
        self.charges = np.broadcast_to(np.asarray(self.charges, dtype=float), (n,)).copy()
        self.masses = np.broadcast_to(np.asarray(self.masses, dtype=float), (n,)).copy()
        if self.active is None:
            self.active = np.ones(n, dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool).reshape(n)
        if np.any(self.masses <= 0):
            raise ValueError("particle masses must be positive")

    def __len__(self):
        return len(self.positions)

    @property
    def active_count(self) -> int:
        return int(self.active.sum())

    @property
    def total_charge(self) -> float:
        return float(self.charges[self.active].sum())

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.positions.copy(), self.velocities.copy(), self.charges.copy(),
                           self.masses.copy(), self.active.copy())


@dataclass(frozen=True)
class GlobalLattice:
    """``m * m`` particles on the interior points of an ``(m+1)``-spaced lattice."""
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("lattice size must be positive")


@dataclass(frozen=True)
class PerCell:
    """``k * k`` particles per cell on a regular sub-lattice.

    Sub-lattice coordinates are ``(a + offset) / k`` of the cell width,
    ``a = 0 .. k-1``; the default ``offset=0.5`` centres the lattice, and
    ``offset=0`` anchors it at the lower-left cell corner.
    """
    k: int
    offset: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("particles per cell axis must be positive")
        if not 0.0 <= self.offset < 1.0:
            raise ValueError("sub-lattice offset must lie in [0, 1)")


def load_uniform(grid: CartesianGrid, geom: LevelSet, pattern, rho: float = -4.0,
                 mass: float = 1.0, cull: bool = True) -> ParticleSet:
    """Place a uniform cloud of density ``rho`` and drop particles inside the conductor.

    The particle charge is ``rho`` times the area each particle represents,
    so a full cloud deposits exactly ``rho`` on interior nodes.
    """
    if isinstance(pattern, GlobalLattice):
        m = pattern.m
        dx = (grid.xmax - grid.xmin) / (m + 1)
        dy = (grid.ymax - grid.ymin) / (m + 1)
        x = grid.xmin + dx * np.arange(1, m + 1)
        y = grid.ymin + dy * np.arange(1, m + 1)
        q = rho * dx * dy
    elif isinstance(pattern, PerCell):
        k = pattern.k
        offs = (np.arange(k) + pattern.offset) / k
        x = (grid.xmin + grid.hx * (np.arange(grid.nx)[:, None] + offs[None, :])).ravel()
        y = (grid.ymin + grid.hy * (np.arange(grid.ny)[:, None] + offs[None, :])).ravel()
        q = rho * grid.hx * grid.hy / (k * k)
    else:
        raise TypeError(f"unknown loading pattern {pattern!r}")
    xx, yy = np.meshgrid(x, y)
    pos = np.column_stack([xx.ravel(), yy.ravel()])
    if cull:
        pos = pos[geom.at(pos) >= 0]
    n = len(pos)
    return ParticleSet(pos, np.zeros((n, 2)), np.full(n, q), np.full(n, mass))


@dataclass
class DepositResult:
    charge: np.ndarray
    density: np.ndarray
    mode: str
    node_inside: np.ndarray
    particle_charge: float

    @property
    def plasma_charge(self) -> float:
        """Charge on nodes outside the conductor."""
        return float(self.charge[~self.node_inside].sum())

    @property
    def lost_charge(self) -> float:
        return float(self.charge[self.node_inside].sum())

    def conservation_error(self) -> float:
        if self.particle_charge == 0:
            return abs(self.plasma_charge)
        return abs(self.plasma_charge - self.particle_charge) / abs(self.particle_charge)


def area_weights(grid: CartesianGrid, positions):
    """Cell indices and corner weights ``(n, 4)`` for corners (i,j), (i+1,j), (i+1,j+1), (i,j+1)."""
    ci, cj, xi, eta = grid.locate_cell(positions)
    w = np.column_stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
    return cj * grid.nx + ci, w


def redistribute(weights, inside) -> np.ndarray:
    """Move the weight of inside corners onto outside corners in proportion.

    One formula covers any subset of inside corners; rows with no outside
    weight split the moved weight evenly among outside corners.
    """
    w = np.asarray(weights, dtype=float)
    inside = np.asarray(inside, dtype=bool)
    outside = ~inside
    if np.any(~outside.any(axis=-1)):
        raise GeometryError("particle deposited in a cell with every corner inside the conductor")
    moved = np.sum(np.where(inside, w, 0.0), axis=-1, keepdims=True)
    w_out = np.where(outside, w, 0.0)
    s_out = w_out.sum(axis=-1, keepdims=True)
    share = np.where(s_out > 0, w_out / np.where(s_out > 0, s_out, 1.0),
                     outside / outside.sum(axis=-1, keepdims=True))
    return w_out + share * moved


def charge_to_density(charge, grid: CartesianGrid) -> np.ndarray:
    return np.asarray(charge, dtype=float) / grid.control_volumes()


def _deposit(particles: ParticleSet, mesh: TriangulatedMesh, mode: str) -> DepositResult:
    grid = mesh.grid
    act = particles.active
    pos = particles.positions[act]
    q = particles.charges[act]
    cell, w = area_weights(grid, pos)
    corners = grid.cell_corners(cell)
    if mode == IMPROVED:
        inside = mesh.node_inside[corners]
        cut = inside.any(axis=1)
        if cut.any():
            w = w.copy()
            w[cut] = redistribute(w[cut], inside[cut])
    elif mode != STANDARD:
        raise ValueError(f"unknown deposit mode {mode!r}")
    charge = np.bincount(corners.ravel(), weights=(w * q[:, None]).ravel(), minlength=grid.n_nodes)
    return DepositResult(charge, charge_to_density(charge, grid), mode, mesh.node_inside,
                         float(q.sum()))


def deposit_standard(particles: ParticleSet, mesh: TriangulatedMesh) -> DepositResult:
    """Area weighting to the four cell corners, conductor nodes included."""
    return _deposit(particles, mesh, STANDARD)


def deposit_improved(particles: ParticleSet, mesh: TriangulatedMesh) -> DepositResult:
    """Area weighting followed by redistribution off conductor nodes."""
    return _deposit(particles, mesh, IMPROVED)


def deposit(particles: ParticleSet, mesh: TriangulatedMesh, mode: str = IMPROVED) -> DepositResult:
    return _deposit(particles, mesh, mode)


# -- gather -----------------------------------------------------------------

@dataclass
class FieldAtNodes:
    ex: np.ndarray
    ey: np.ndarray


def nodal_field_fd(phi, grid: CartesianGrid) -> FieldAtNodes:
    """Central differences inside, second-order one-sided on the boundary."""
    P = np.asarray(phi, dtype=float).reshape(grid.ny + 1, grid.nx + 1)
    dPy, dPx = np.gradient(P, grid.hy, grid.hx, edge_order=2)
    return FieldAtNodes(-dPx.ravel(), -dPy.ravel())


def gather_fd(phi, grid: CartesianGrid, positions, nodal: FieldAtNodes = None) -> np.ndarray:
    """Bilinear interpolation of finite-difference nodal fields, ``(n, 2)``."""
    if nodal is None:
        nodal = nodal_field_fd(phi, grid)
    cell, w = area_weights(grid, positions)
    c = grid.cell_corners(cell)
    return np.column_stack([np.sum(w * nodal.ex[c], axis=1), np.sum(w * nodal.ey[c], axis=1)])


def gather_ife(phi, mesh: TriangulatedMesh, basis: BasisTable, positions) -> np.ndarray:
    """Minus the gradient of the IFE solution on the side holding each particle."""
    _, tri, side = mesh.locate(positions)
    if np.any(side == MINUS):
        k = np.flatnonzero(side == MINUS)[0]
        raise GeometryError(f"particle at {tuple(np.atleast_2d(positions)[k])} is inside the conductor")
    G = basis.gradients(tri, side)  # (n, 3, 2)
    u = np.asarray(phi, dtype=float)[mesh.triangles[tri]]
    return -np.einsum("ni,nid->nd", u, G)


# -- push -------------------------------------------------------------------

def push_boris(particles: ParticleSet, efield, bz, dt: float, mesh: TriangulatedMesh = None,
               grid: CartesianGrid = None) -> ParticleSet:
    """Advance active particles one step in place and return them.

    Half electric kick, rotation about the out-of-plane field ``bz``, half
    kick, drift.  Particles that leave the box or enter the conductor are
    deactivated.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    act = particles.active
    if not act.any():
        return particles
    qm = (particles.charges / particles.masses)[act]
    E = np.broadcast_to(np.asarray(efield, dtype=float), (len(particles), 2))[act]
    B = np.broadcast_to(np.asarray(bz, dtype=float), (len(particles),))[act]
    v = particles.velocities[act]
    half = 0.5 * dt * qm[:, None]
    vm = v + half * E
    t = 0.5 * dt * qm * B
    s = 2.0 * t / (1.0 + t * t)
    # v' = v- + v- x t, v+ = v- + v' x s with t, s along z
    vpx = vm[:, 0] + vm[:, 1] * t
    vpy = vm[:, 1] - vm[:, 0] * t
    vplus = np.column_stack([vm[:, 0] + vpy * s, vm[:, 1] - vpx * s])
    vnew = vplus + half * E
    particles.velocities[act] = vnew
    particles.positions[act] = particles.positions[act] + vnew * dt

    if grid is None and mesh is not None:
        grid = mesh.grid
    if grid is not None:
        p = particles.positions
        out = ((p[:, 0] < grid.xmin) | (p[:, 0] > grid.xmax)
               | (p[:, 1] < grid.ymin) | (p[:, 1] > grid.ymax))
        particles.active &= ~out
    if mesh is not None:
        idx = np.flatnonzero(particles.active)
        inside = mesh.geom.at(particles.positions[idx]) < 0
        particles.active[idx[inside]] = False
    return particles
