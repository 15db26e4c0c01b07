"""Estimator-style wrapper: fit on a particle cloud, predict the potential."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import pic
from .basis import build_basis_table
from .mesh import CartesianGrid, Circle, build_mesh
from .solver import NODAL_DENSITY, PPIFE, SolverConfig, evaluate, solve_field


class IFEFieldSolver(TransformerMixin, BaseEstimator):
    """Electrostatic field of a particle cloud around a circular conductor.

    ``fit`` deposits the particles onto the grid and solves for the
    potential; ``predict`` returns the potential at query points and
    ``transform`` the electric field there.

    Parameters
    ----------
    mesh : int
        Cells per axis on the square ``domain``.
    beta_minus, beta_plus : float
        Coefficient inside and outside the conductor.
    radius, center :
        Conductor geometry.
    scheme : {"ppife", "galerkin"}
    epsilon : {-1, 0, 1}
    sigma0 : float
        Penalty scale for ``scheme="ppife"``.
    deposit : {"improved", "standard"}
    gather : {"ife", "fd"}
    boundary : callable or None
        Dirichlet data ``g(x, y)`` on the box; ``None`` grounds the box.
    conductor_source : callable or None
        Source inside the conductor.  When given, charge landing on conductor
        nodes is ignored in favour of it.
    domain : tuple
        ``(lo, hi)`` for both axes.
    """

    def __init__(self, mesh=40, beta_minus=1.0, beta_plus=10.0, radius=np.pi / 12,
                 center=(0.0, 0.0), scheme=PPIFE, epsilon=1, sigma0=10.0,
                 deposit=pic.IMPROVED, gather="ife", boundary=None, conductor_source=None,
                 domain=(-1.0, 1.0)):
        self.mesh = mesh
        self.beta_minus = beta_minus
        self.beta_plus = beta_plus
        self.radius = radius
        self.center = center
        self.scheme = scheme
        self.epsilon = epsilon
        self.sigma0 = sigma0
        self.deposit = deposit
        self.gather = gather
        self.boundary = boundary
        self.conductor_source = conductor_source
        self.domain = domain

    def _check_params(self):
        if int(self.mesh) != self.mesh or self.mesh < 2:
            raise ValueError(f"mesh must be an integer >= 2, got {self.mesh!r}")
        if self.beta_minus <= 0 or self.beta_plus <= 0:
            raise ValueError("beta_minus and beta_plus must be positive")
        if self.deposit not in (pic.STANDARD, pic.IMPROVED):
            raise ValueError(f"unknown deposit mode {self.deposit!r}")
        if self.gather not in ("ife", "fd"):
            raise ValueError(f"unknown gather mode {self.gather!r}")
        return SolverConfig(scheme=self.scheme, epsilon=self.epsilon, sigma0=self.sigma0,
                            rhs_mode=NODAL_DENSITY)

    def _check_positions(self, X, reset):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 2:
            raise ValueError(f"expected positions with 2 columns, got {X.shape[1]}")
        if reset:
            self.n_features_in_ = 2
        return X

    def fit(self, X, y=None, sample_weight=None):
        """Deposit particles at ``X`` with charges ``sample_weight`` and solve.

        Particles must lie in the box and outside the conductor.
        """
        config = self._check_params()
        X = self._check_positions(X, reset=True)
        if sample_weight is None:
            q = np.ones(len(X))
        else:
            q = check_array(np.asarray(sample_weight, dtype=float).reshape(-1, 1),
                            ensure_2d=True).ravel()
            if len(q) != len(X):
                raise ValueError("sample_weight must have one entry per particle")
        lo, hi = self.domain
        geom = Circle(tuple(self.center), self.radius)
        if np.any(geom.at(X) < 0):
            raise ValueError("particles inside the conductor cannot be deposited")
        self.mesh_ = build_mesh(CartesianGrid.square(int(self.mesh), lo, hi), geom)
        self.basis_ = build_basis_table(self.mesh_, self.beta_minus, self.beta_plus)
        parts = pic.ParticleSet(X, np.zeros_like(X), q, 1.0)
        self.deposit_ = pic.deposit(parts, self.mesh_, self.deposit)
        self.solution_ = solve_field(self.mesh_, self.basis_, config, density=self.deposit_.density,
                                     conductor_source=self.conductor_source, boundary=self.boundary)
        self.potential_ = self.solution_.phi
        return self

    def predict(self, X):
        """Potential at the query points."""
        check_is_fitted(self, "potential_")
        X = self._check_positions(X, reset=False)
        return evaluate(self.mesh_, self.basis_, self.potential_, X)

    def transform(self, X):
        """Electric field ``(n, 2)`` at the query points."""
        check_is_fitted(self, "potential_")
        X = self._check_positions(X, reset=False)
        if self.gather == "ife":
            return pic.gather_ife(self.potential_, self.mesh_, self.basis_, X)
        return pic.gather_fd(self.potential_, self.mesh_.grid, X)

    electric_field = transform

    def fit_transform(self, X, y=None, sample_weight=None):
        return self.fit(X, sample_weight=sample_weight).transform(X)
