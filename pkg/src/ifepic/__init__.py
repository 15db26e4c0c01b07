"""Immersed-finite-element particle-in-cell tools for 2D electrostatics.

A uniform Cartesian grid is triangulated and cut by a level-set conductor
boundary.  The field solver offers the classical Galerkin IFE scheme and a
partially penalized variant; the particle side offers standard and
charge-conserving area-weight deposits, finite-difference and IFE gathers,
and a Boris push.
"""
from .basis import BasisTable, DegenerateCutError, IFELocalBasis, build_basis_table, build_local_basis
from .driver import (BenchmarkSpec, CycleConfig, ExactSolution, compute_density_metrics,
                     compute_l2_error, run_cycle, run_table1, run_table2, run_table3)
from .estimator import IFEFieldSolver
from .io import export_nodal_field, export_table, read_nodal_field
from .mesh import (CartesianGrid, Circle, FunctionLevelSet, GeometryError, InterfaceCut,
                   OutOfDomainError, TriangulatedMesh, build_mesh, edge_root)
from .pic import (GlobalLattice, ParticleSet, PerCell, deposit_improved, deposit_standard,
                  gather_fd, gather_ife, load_uniform, push_boris)
from .solver import SolverConfig, SolverError, solve_field

__version__ = "0.1.0"
