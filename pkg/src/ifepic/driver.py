"""Benchmark experiments and the IFE-PIC time loop.

The benchmark is a conducting cylinder of radius ``pi/12`` in
``[-1, 1]^2`` with conductivities ``beta = (1, 10)`` and a uniform
background plasma of density ``-4``.  The manufactured potential is
``r^2 / beta+`` in the plasma and ``r^2 / beta- + (1/beta+ - 1/beta-) r0^2``
inside the cylinder, so ``-div(beta grad u) = -4`` on both sides.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import pic
from .basis import BasisTable, build_basis_table
from .mesh import MINUS, PLUS, CartesianGrid, Circle, TriangulatedMesh, build_mesh
from .quadrature import map_points, triangle_rule
from .solver import (ANALYTIC, GALERKIN, NODAL_DENSITY, PPIFE, FieldSolution, SolverConfig,
                     SolverError, solve_field)

logger = logging.getLogger(__name__)

TABLE_COUNTS = (1, 4, 16, 64, 256, 1024)
TABLE_MESHES = (10, 20, 40, 80, 160, 320)


def worker_count() -> int:
    """Worker cap from ``IFEPIC_THREADS``; 0 or unset means one per CPU."""
    try:
        n = int(os.environ.get("IFEPIC_THREADS", "0") or 0)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _map(fn, items, workers=None):
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


class ExactSolution:
    """Piecewise-quadratic cylinder potential and its data."""

    def __init__(self, beta_minus=1.0, beta_plus=10.0, radius=np.pi / 12, center=(0.0, 0.0)):
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)
        self.radius = float(radius)
        self.center = (float(center[0]), float(center[1]))
        self.shift = (1.0 / self.beta_plus - 1.0 / self.beta_minus) * self.radius ** 2

    def _r2(self, x, y):
        return (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2

    def minus(self, x, y):
        return self._r2(x, y) / self.beta_minus + self.shift

    def plus(self, x, y):
        return self._r2(x, y) / self.beta_plus

    def __call__(self, x, y):
        r2 = self._r2(x, y)
        return np.where(r2 <= self.radius ** 2, r2 / self.beta_minus + self.shift, r2 / self.beta_plus)

    def on_side(self, x, y, side):
        return np.where(side == MINUS, self.minus(x, y), self.plus(x, y))

    def gradient(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = self._r2(x, y) <= self.radius ** 2
        beta = np.where(inside, self.beta_minus, self.beta_plus)
        return np.stack([2 * (x - self.center[0]) / beta, 2 * (y - self.center[1]) / beta], axis=-1)

    def source(self, x, y):
        return np.full(np.shape(x), -4.0)

    boundary = __call__

    def jump_residuals(self, n: int = 100):
        """Largest value and flux jumps over ``n`` points on the circle."""
        th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        x = self.center[0] + self.radius * np.cos(th)
        y = self.center[1] + self.radius * np.sin(th)
        value = np.abs(self.minus(x, y) - self.plus(x, y)).max()
        # radial derivatives: beta * d/dr (r^2 / beta) = 2 r on both sides
        flux_m = self.beta_minus * 2 * self.radius / self.beta_minus
        flux_p = self.beta_plus * 2 * self.radius / self.beta_plus
        return float(value), float(abs(flux_m - flux_p))

    def self_check(self, tol: float = 1e-12):
        value, flux = self.jump_residuals()
        if value > tol or flux > tol:
            raise AssertionError(f"exact solution jump residuals {value:.2e}, {flux:.2e} exceed {tol:g}")


def compute_l2_error(phi_h, exact, mesh: TriangulatedMesh, basis: BasisTable, degree: int = 4) -> float:
    """L2 norm of ``u - u_h`` over the whole box.

    Each quadrature sub-triangle uses the exact solution's expression for its
    own side, so the integrand is a polynomial and the default rule is exact.
    """
    bary, w = triangle_rule(degree)
    pts = map_points(mesh.piece_verts, bary)
    wts = mesh.piece_area[:, None] * w[None, :]
    c = basis.coef[mesh.piece_tri, mesh.piece_side]
    vals = np.einsum("pid,pqd->pqi", c[:, :, 0:2], pts) + c[:, None, :, 2]
    uh = np.einsum("pqi,pi->pq", vals, np.asarray(phi_h, dtype=float)[mesh.triangles[mesh.piece_tri]])
    if hasattr(exact, "on_side"):
        u = exact.on_side(pts[..., 0], pts[..., 1], mesh.piece_side[:, None])
    else:
        u = exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(wts * (u - uh) ** 2)))


def compute_density_metrics(deposit: pic.DepositResult, mesh: TriangulatedMesh, rho: float,
                            nodes=None):
    """Mean density over interface nodes and its relative error."""
    if nodes is None:
        nodes = mesh.interface_cell_nodes()
    nodes = np.asarray(nodes)
    if len(nodes) == 0:
        raise ValueError("no interface nodes: the interface does not cross the mesh")
    rho_bar = float(deposit.density[nodes].mean())
    return rho_bar, abs(rho - rho_bar) / abs(rho)


@dataclass(frozen=True)
class BenchmarkSpec:
    meshes: tuple = TABLE_MESHES
    counts: tuple = TABLE_COUNTS
    table_mesh: int = 40
    beta_minus: float = 1.0
    beta_plus: float = 10.0
    center: tuple = (0.0, 0.0)
    radius: float = np.pi / 12
    rho: float = -4.0
    lattice_offset: float = 0.5
    global_particles: int = 1279
    epsilon: int = 1
    sigma0: float = 10.0
    linear_tol: float = 1e-10

    def exact(self) -> ExactSolution:
        return ExactSolution(self.beta_minus, self.beta_plus, self.radius, self.center)

    def setup(self, n: int):
        mesh = build_mesh(CartesianGrid.square(n), Circle(self.center, self.radius))
        return mesh, build_basis_table(mesh, self.beta_minus, self.beta_plus)


@dataclass(frozen=True)
class Pipeline:
    name: str
    scheme: str
    deposit: str
    gather: str


TRADITIONAL = Pipeline("traditional", GALERKIN, pic.STANDARD, "fd")
IMPROVED = Pipeline("improved", PPIFE, pic.IMPROVED, "ife")


def solve_from_particles(mesh, basis, particles, pipeline: Pipeline, exact: ExactSolution,
                         epsilon=1, sigma0=10.0, linear_tol=1e-10):
    """Deposit, then solve with the plasma density and the conductor's own source."""
    dep = pic.deposit(particles, mesh, pipeline.deposit)
    cfg = SolverConfig(scheme=pipeline.scheme, epsilon=epsilon, sigma0=sigma0,
                       linear_tol=linear_tol, rhs_mode=NODAL_DENSITY)
    sol = solve_field(mesh, basis, cfg, density=dep.density, conductor_source=exact.source,
                      boundary=exact.boundary)
    return dep, sol


def run_table1(spec: BenchmarkSpec = BenchmarkSpec()):
    """Interface density statistics for both deposit modes on one mesh."""
    mesh, _ = spec.setup(spec.table_mesh)

    def row(N):
        k = int(round(np.sqrt(N)))
        if k * k != N:
            raise ValueError(f"particle count {N} is not a perfect square")
        parts = pic.load_uniform(mesh.grid, mesh.geom, pic.PerCell(k, spec.lattice_offset), spec.rho)
        std = pic.deposit_standard(parts, mesh)
        imp = pic.deposit_improved(parts, mesh)
        rs, es = compute_density_metrics(std, mesh, spec.rho)
        ri, ei = compute_density_metrics(imp, mesh, spec.rho)
        return {"N": N, "rho_bar_std": rs, "err_std": es, "rho_bar_imp": ri, "err_imp": ei,
                "conservation_imp": imp.conservation_error()}

    return _map(row, spec.counts)


def run_table2(spec: BenchmarkSpec = BenchmarkSpec()):
    """L2 potential error of both pipelines against particles per cell."""
    mesh, basis = spec.setup(spec.table_mesh)
    exact = spec.exact()

    def row(N):
        k = int(round(np.sqrt(N)))
        parts = pic.load_uniform(mesh.grid, mesh.geom, pic.PerCell(k, spec.lattice_offset), spec.rho)
        out = {"N": N}
        for pl in (TRADITIONAL, IMPROVED):
            _, sol = solve_from_particles(mesh, basis, parts, pl, exact, spec.epsilon, spec.sigma0,
                                          spec.linear_tol)
            out[f"err_{pl.name}"] = compute_l2_error(sol.phi, exact, mesh, basis)
        return out

    return _map(row, spec.counts)


def convergence_rate(h, err) -> float:
    """Least-squares slope of ``log(err)`` against ``log(h)``."""
    return float(np.polyfit(np.log(np.asarray(h, dtype=float)), np.log(np.asarray(err, dtype=float)), 1)[0])


def run_table3(spec: BenchmarkSpec = BenchmarkSpec()):
    """L2 potential error of both pipelines on a mesh sequence, same particle cloud."""
    exact = spec.exact()

    def row(n):
        mesh, basis = spec.setup(n)
        parts = pic.load_uniform(mesh.grid, mesh.geom, pic.GlobalLattice(spec.global_particles), spec.rho)
        out = {"mesh": f"{n}x{n}", "h": mesh.grid.hx}
        for pl in (TRADITIONAL, IMPROVED):
            _, sol = solve_from_particles(mesh, basis, parts, pl, exact, spec.epsilon, spec.sigma0,
                                          spec.linear_tol)
            out[f"err_{pl.name}"] = compute_l2_error(sol.phi, exact, mesh, basis)
        return out

    # the finest meshes dominate memory; run them one at a time
    rows = [row(n) for n in spec.meshes]
    h = [r["h"] for r in rows]
    rates = {"mesh": "rate", "h": float("nan")}
    for pl in (TRADITIONAL, IMPROVED):
        rates[f"err_{pl.name}"] = convergence_rate(h, [r[f"err_{pl.name}"] for r in rows])
    return rows + [rates]


# -- time loop ------------------------------------------------------------

@dataclass
class CycleConfig:
    mesh: int = 40
    beta_minus: float = 1.0
    beta_plus: float = 10.0
    radius: float = np.pi / 12
    center: tuple = (0.0, 0.0)
    rho: float = -4.0
    particles_per_cell: int = 4
    lattice_offset: float = 0.5
    deposit: str = pic.IMPROVED
    gather: str = "ife"
    scheme: str = PPIFE
    epsilon: int = 1
    sigma0: float = 10.0
    linear_tol: float = 1e-10
    dt: float = 1e-3
    bz: float = 0.0
    mass: float = 1.0
    initial_speed: float = 0.0


@dataclass
class CycleState:
    mesh: TriangulatedMesh
    basis: BasisTable
    particles: pic.ParticleSet
    deposit: pic.DepositResult
    solution: FieldSolution
    efield: np.ndarray
    history: list = field(default_factory=list)


def _gather(state_mesh, basis, phi, particles, mode):
    E = np.zeros((len(particles), 2))
    act = particles.active
    if act.any():
        pos = particles.positions[act]
        if mode == "ife":
            E[act] = pic.gather_ife(phi, state_mesh, basis, pos)
        elif mode == "fd":
            E[act] = pic.gather_fd(phi, state_mesh.grid, pos)
        else:
            raise ValueError(f"unknown gather mode {mode!r}")
    return E


def run_cycle(config: CycleConfig, steps: int) -> CycleState:
    """Push, deposit, solve and gather ``steps`` times.

    The initial deposit, solve and gather supply the first push; every step
    appends ``{step, active, particle_charge, deposited_charge, residual,
    iterations}`` to ``history``.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    mesh = build_mesh(CartesianGrid.square(config.mesh), Circle(config.center, config.radius))
    basis = build_basis_table(mesh, config.beta_minus, config.beta_plus)
    exact = ExactSolution(config.beta_minus, config.beta_plus, config.radius, config.center)
    pipeline = Pipeline("cycle", config.scheme, config.deposit, config.gather)
    parts = pic.load_uniform(mesh.grid, mesh.geom,
                             pic.PerCell(config.particles_per_cell, config.lattice_offset),
                             config.rho, mass=config.mass)
    if config.initial_speed:
        # deterministic radial outflow keeps runs reproducible
        r = parts.positions - np.asarray(config.center)
        nrm = np.linalg.norm(r, axis=1, keepdims=True)
        parts.velocities[:] = config.initial_speed * r / np.where(nrm > 0, nrm, 1.0)

    def solve_step(step):
        try:
            return solve_from_particles(mesh, basis, parts, pipeline, exact, config.epsilon,
                                        config.sigma0, config.linear_tol)
        except SolverError as err:
            raise SolverError(f"step {step}: {err}", err.residual, err.iterations) from err

    dep, sol = solve_step(0)
    E = _gather(mesh, basis, sol.phi, parts, config.gather)
    state = CycleState(mesh, basis, parts, dep, sol, E)
    state.history.append(_summary(0, state))
    for step in range(1, steps + 1):
        if config.dt > 0:
            pic.push_boris(parts, state.efield, config.bz, config.dt, mesh=mesh)
        state.deposit, state.solution = solve_step(step)
        state.efield = _gather(mesh, basis, state.solution.phi, parts, config.gather)
        state.history.append(_summary(step, state))
    return state


def _summary(step, state: CycleState) -> dict:
    return {"step": step, "active": state.particles.active_count,
            "particle_charge": state.particles.total_charge,
            "deposited_charge": state.deposit.plasma_charge,
            "residual": state.solution.residual, "iterations": state.solution.iterations}
