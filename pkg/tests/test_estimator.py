import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ifepic import pic
from ifepic.driver import ExactSolution, compute_l2_error
from ifepic.estimator import IFEFieldSolver
from ifepic.mesh import CartesianGrid, Circle

R0 = np.pi / 12


def benchmark_cloud(n=40, k=2):
    parts = pic.load_uniform(CartesianGrid.square(n), Circle(radius=R0), pic.PerCell(k))
    return parts.positions, parts.charges


def test_params_round_trip():
    est = IFEFieldSolver(mesh=20, sigma0=3.0)
    p = est.get_params()
    assert p["mesh"] == 20 and p["sigma0"] == 3.0
    other = clone(est).set_params(epsilon=-1)
    assert other.epsilon == -1 and est.epsilon == 1


def test_matches_benchmark_pipeline():
    ex = ExactSolution()
    X, q = benchmark_cloud()
    est = IFEFieldSolver(mesh=40, boundary=ex, conductor_source=ex.source).fit(X, sample_weight=q)
    err = compute_l2_error(est.potential_, ex, est.mesh_, est.basis_)
    assert err < 1e-3
    pts = np.array([[0.5, 0.5], [-0.7, 0.2]])
    assert np.allclose(est.predict(pts), ex(pts[:, 0], pts[:, 1]), atol=2e-3)
    E = est.transform(pts)
    assert np.allclose(E, -ex.gradient(pts[:, 0], pts[:, 1]), atol=0.02)


def test_deposit_conserves_charge():
    X, q = benchmark_cloud(20, 1)
    est = IFEFieldSolver(mesh=20).fit(X, sample_weight=q)
    assert est.deposit_.conservation_error() <= 1e-12


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        IFEFieldSolver().predict([[0.5, 0.5]])


@pytest.mark.parametrize("X", [np.zeros((3, 3)), np.array([[np.nan, 0.5]])])
def test_input_validation(X):
    with pytest.raises(ValueError):
        IFEFieldSolver(mesh=8).fit(X)


def test_rejects_particles_in_conductor():
    with pytest.raises(ValueError):
        IFEFieldSolver(mesh=8).fit([[0.0, 0.0]])


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        IFEFieldSolver(mesh=8, epsilon=0, sigma0=0).fit([[0.5, 0.5]])
    with pytest.raises(ValueError):
        IFEFieldSolver(mesh=1).fit([[0.5, 0.5]])


def test_fit_transform_shape():
    X, q = benchmark_cloud(10, 1)
    E = IFEFieldSolver(mesh=10, gather="fd").fit_transform(X, sample_weight=q)
    assert E.shape == (len(X), 2)
    assert np.all(np.isfinite(E))
