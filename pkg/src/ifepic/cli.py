"""Command-line entry point.

Subcommands::

    ifepic solve   [--mesh N --scheme ... --out DIR]
    ifepic deposit [--deposit standard|improved --particles-per-cell K]
    ifepic cycle   [--steps S --dt DT --gather fd|ife]
    ifepic bench table1|table2|table3

A ``--config FILE`` of ``key = value`` lines supplies defaults; flags given
on the command line win.  Exit status is 0 only when the run finished and
the conservation and solver checks held.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import driver, io, pic
from .basis import build_basis_table
from .mesh import CartesianGrid, Circle, GeometryError, build_mesh
from .solver import GALERKIN, PPIFE, SolverConfig, SolverError, solve_field

CONSERVATION_TOL = 1e-12
SUBCOMMANDS = ("solve", "deposit", "cycle", "bench")
TABLES = ("table1", "table2", "table3")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str = "solve"
    table: str | None = None
    mesh: int | None = None
    beta_minus: float = 1.0
    beta_plus: float = 10.0
    epsilon: int = 1
    sigma0: float = 10.0
    deposit: str = pic.IMPROVED
    gather: str = "ife"
    scheme: str = PPIFE
    particles_per_cell: int = 4
    global_particles: int = 1279
    lattice_offset: float = 0.5
    dt: float = 1e-3
    bz: float = 0.0
    steps: int = 10
    out: str = "."
    seed: int = 0  # reserved; every loader is deterministic

    def validate(self) -> "RunConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.subcommand == "bench" and self.table not in TABLES:
            raise ConfigError(f"bench needs one of {', '.join(TABLES)}")
        if self.mesh is not None and self.mesh < 2:
            raise ConfigError("mesh must be at least 2")
        if self.beta_minus <= 0 or self.beta_plus <= 0:
            raise ConfigError("coefficients must be positive")
        for name in ("particles_per_cell", "global_particles"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.dt < 0:
            raise ConfigError("dt must be nonnegative")
        if self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        if not 0 <= self.lattice_offset < 1:
            raise ConfigError("lattice_offset must lie in [0, 1)")
        if self.deposit not in (pic.STANDARD, pic.IMPROVED):
            raise ConfigError(f"unknown deposit mode {self.deposit!r}")
        if self.gather not in ("fd", "ife"):
            raise ConfigError(f"unknown gather mode {self.gather!r}")
        try:
            self.solver_config()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        return self

    def solver_config(self, **kw) -> SolverConfig:
        return SolverConfig(scheme=self.scheme, epsilon=self.epsilon, sigma0=self.sigma0, **kw)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str, "int | None": int, "str | None": str}


def _coerce(key, raw):
    cast = _CASTS[_FIELD_TYPES[key]]
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    aliases = {"sigma": "sigma0"}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = aliases.get(key.replace("-", "_"), key.replace("-", "_"))
        if key not in _FIELD_TYPES or key == "subcommand":
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="FILE")
    common.add_argument("--mesh", type=int, metavar="N")
    common.add_argument("--beta-minus", dest="beta_minus", type=float)
    common.add_argument("--beta-plus", dest="beta_plus", type=float)
    common.add_argument("--epsilon", type=int, choices=(-1, 0, 1))
    common.add_argument("--sigma", dest="sigma0", type=float)
    common.add_argument("--deposit", choices=(pic.STANDARD, pic.IMPROVED))
    common.add_argument("--gather", choices=("fd", "ife"))
    common.add_argument("--scheme", choices=(GALERKIN, PPIFE))
    common.add_argument("--particles-per-cell", dest="particles_per_cell", type=int, metavar="K")
    common.add_argument("--global-particles", dest="global_particles", type=int, metavar="M")
    common.add_argument("--lattice-offset", dest="lattice_offset", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--bz", type=float)
    common.add_argument("--steps", type=int)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="ifepic", description="2D IFE-PIC benchmark runner")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("solve", parents=[common], help="field solve with the analytic source")
    sub.add_parser("deposit", parents=[common], help="deposit a uniform cloud and export density")
    sub.add_parser("cycle", parents=[common], help="run the push/deposit/solve/gather loop")
    b = sub.add_parser("bench", parents=[common], help="reproduce a benchmark table")
    b.add_argument("table", choices=TABLES)
    return parser


def parse_cli(argv=None) -> RunConfig:
    """Parse arguments into a validated :class:`RunConfig`.

    Invalid input exits through ``argparse`` with status 2.
    """
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    values = {}
    try:
        if "config" in ns:
            values.update(read_config_file(ns.pop("config")))
        values.update(ns)
        return RunConfig(**values).validate()
    except (ConfigError, OSError) as err:
        parser.error(str(err))


# -- runners ---------------------------------------------------------------

def _setup(cfg: RunConfig, n: int):
    mesh = build_mesh(CartesianGrid.square(n), Circle())
    basis = build_basis_table(mesh, cfg.beta_minus, cfg.beta_plus)
    exact = driver.ExactSolution(cfg.beta_minus, cfg.beta_plus)
    return mesh, basis, exact


def _run_solve(cfg: RunConfig, out: Path) -> bool:
    mesh, basis, exact = _setup(cfg, cfg.mesh or 40)
    sol = solve_field(mesh, basis, cfg.solver_config(), source=exact.source, boundary=exact.boundary)
    err = driver.compute_l2_error(sol.phi, exact, mesh, basis)
    xy = mesh.nodes
    io.export_nodal_field(sol.phi, mesh.grid, out / "potential.csv")
    io.export_nodal_field(sol.phi - exact(xy[:, 0], xy[:, 1]), mesh.grid, out / "error.csv")
    print(f"L2 error {err:.6e}  residual {sol.residual:.2e}  iterations {sol.iterations}")
    return True


def _run_deposit(cfg: RunConfig, out: Path) -> bool:
    mesh, _, _ = _setup(cfg, cfg.mesh or 40)
    parts = pic.load_uniform(mesh.grid, mesh.geom, pic.PerCell(cfg.particles_per_cell, cfg.lattice_offset))
    dep = pic.deposit(parts, mesh, cfg.deposit)
    rho_bar, e_rho = driver.compute_density_metrics(dep, mesh, -4.0)
    io.export_nodal_field(dep.density, mesh.grid, out / "density.csv")
    cons = dep.conservation_error()
    print(f"{cfg.deposit}: rho_bar {rho_bar:.6f}  E_rho {100 * e_rho:.2f}%  conservation {cons:.1e}")
    return cfg.deposit != pic.IMPROVED or cons <= CONSERVATION_TOL


def _run_cycle(cfg: RunConfig, out: Path) -> bool:
    cc = driver.CycleConfig(mesh=cfg.mesh or 40, beta_minus=cfg.beta_minus, beta_plus=cfg.beta_plus,
                            particles_per_cell=cfg.particles_per_cell,
                            lattice_offset=cfg.lattice_offset, deposit=cfg.deposit,
                            gather=cfg.gather, scheme=cfg.scheme, epsilon=cfg.epsilon,
                            sigma0=cfg.sigma0, dt=cfg.dt, bz=cfg.bz)
    state = driver.run_cycle(cc, cfg.steps)
    io.export_table(state.history, out / "history.csv")
    io.export_particles(state.particles, out / "particles.csv")
    io.export_nodal_field(state.solution.phi, state.mesh.grid, out / "potential.csv")
    last = state.history[-1]
    print(f"{cfg.steps} steps: active {last['active']}  charge {last['particle_charge']:.6e}")
    if cfg.deposit != pic.IMPROVED:
        return True
    return all(abs(h["deposited_charge"] - h["particle_charge"])
               <= CONSERVATION_TOL * max(abs(h["particle_charge"]), 1e-300) for h in state.history)


def _run_bench(cfg: RunConfig, out: Path) -> bool:
    spec = driver.BenchmarkSpec(beta_minus=cfg.beta_minus, beta_plus=cfg.beta_plus,
                                epsilon=cfg.epsilon, sigma0=cfg.sigma0,
                                lattice_offset=cfg.lattice_offset,
                                global_particles=cfg.global_particles)
    if cfg.mesh is not None:
        if cfg.table == "table3":
            # a quick run: the standard sequence up to the requested mesh
            meshes = tuple(n for n in driver.TABLE_MESHES if n <= cfg.mesh)
            if len(meshes) < 2:
                raise ConfigError("table3 needs at least two meshes")
            spec = dataclasses.replace(spec, meshes=meshes)
        else:
            spec = dataclasses.replace(spec, table_mesh=cfg.mesh)
    run = {"table1": driver.run_table1, "table2": driver.run_table2, "table3": driver.run_table3}
    rows = run[cfg.table](spec)
    io.export_table(rows, out / f"{cfg.table}.csv", io.TABLE_COLUMNS[cfg.table])
    cols = io.TABLE_COLUMNS[cfg.table]
    print(",".join(cols))
    for r in rows:
        print(",".join(io._fmt(r[c]) for c in cols))
    if cfg.table == "table1":
        return all(r["conservation_imp"] <= CONSERVATION_TOL for r in rows)
    return True


RUNNERS = {"solve": _run_solve, "deposit": _run_deposit, "cycle": _run_cycle, "bench": _run_bench}


def main(argv=None) -> int:
    cfg = parse_cli(argv)
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ok = RUNNERS[cfg.subcommand](cfg, out)
    except (SolverError, GeometryError, ConfigError, OSError) as err:
        print(f"ifepic: error: {err}", file=sys.stderr)
        return 1
    if not ok:
        print("ifepic: error: invariant check failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
