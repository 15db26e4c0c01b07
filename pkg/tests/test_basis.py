import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifepic.basis import (BasisTable, build_basis_table, build_local_basis, constraint_residuals,
                          standard_coefficients)
from ifepic.mesh import (INTERFACE, MINUS, PLUS, CartesianGrid, Circle, FunctionLevelSet,
                         build_mesh, compute_cut)


def reference_cut():
    return compute_cut([(0, 0), (1, 0), (0, 1)], FunctionLevelSet(lambda x, y: x + y - 0.5))


def test_reference_triangle_constraints():
    cut = reference_cut()
    assert list(cut.vertex_plus) == [False, True, True]
    b = build_local_basis(cut, 1.0, 10.0)
    assert np.abs(constraint_residuals(b, cut)).max() < 1e-12


def test_nodal_and_continuity_examples():
    cut = reference_cut()
    b = build_local_basis(cut, 1.0, 10.0)
    for i in range(3):
        for j in range(3):
            side = "plus" if cut.vertex_plus[j] else "minus"
            assert b.eval(i, cut.vertices[j], side) == pytest.approx(float(i == j), abs=1e-12)
        assert b.eval(i, cut.D, "plus") == pytest.approx(b.eval(i, cut.D, "minus"), abs=1e-10)
        # flux and tangential continuity
        n = cut.normal
        t = np.array([-n[1], n[0]])
        assert 10.0 * b.grad(i, PLUS) @ n == pytest.approx(1.0 * b.grad(i, MINUS) @ n, abs=1e-10)
        assert b.grad(i, PLUS) @ t == pytest.approx(b.grad(i, MINUS) @ t, abs=1e-10)


def test_equal_coefficients_give_standard_basis():
    cut = reference_cut()
    b = build_local_basis(cut, 3.0, 3.0)
    std = standard_coefficients(cut.vertices)
    assert np.allclose(b.coef_plus, std, atol=1e-13)
    assert np.allclose(b.coef_minus, std, atol=1e-13)


@pytest.mark.parametrize("ratio", [1 - 1e-8, 1 + 1e-8])
def test_near_unit_ratio_is_close_to_standard(ratio):
    cut = reference_cut()
    b = build_local_basis(cut, 1.0, ratio)
    std = standard_coefficients(cut.vertices)
    assert np.abs(b.coef_plus - std).max() < 1e-7
    assert np.abs(b.coef_minus - std).max() < 1e-7


def test_benchmark_constraints_and_partition(bench40):
    mesh, basis = bench40
    assert len(mesh.cuts) > 0
    worst = 0.0
    for t, cut in mesh.cuts.items():
        worst = max(worst, np.abs(constraint_residuals(basis.local(t), cut)).max())
    assert worst < 1e-10
    s = basis.coef.sum(axis=2)
    assert np.abs(s[..., 0:2]).max() < 1e-12
    assert np.abs(s[..., 2] - 1).max() < 1e-12


def test_interpolates_piecewise_linear_solution_exactly():
    # u = (x - s)/beta on each side of the line x = s satisfies both jump conditions
    s, bm, bp = 0.137, 1.0, 10.0
    mesh = build_mesh(CartesianGrid.square(6), FunctionLevelSet(lambda x, y: x - s))
    basis = build_basis_table(mesh, bm, bp)

    def u(x, y):
        return np.where(x < s, (x - s) / bm, (x - s) / bp)

    nodal = u(mesh.nodes[:, 0], mesh.nodes[:, 1])
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, size=(500, 2))
    _, tri, side = mesh.locate(pts)
    vals = np.sum(basis.evaluate(tri, side, pts) * nodal[mesh.triangles[tri]], axis=1)
    assert np.abs(vals - u(pts[:, 0], pts[:, 1])).max() < 1e-12


def test_regular_triangles_use_standard_basis(bench40):
    mesh, basis = bench40
    reg = np.flatnonzero(mesh.kind != INTERFACE)
    std = standard_coefficients(mesh.nodes[mesh.triangles[reg]])
    assert np.allclose(basis.coef[reg, PLUS], std)
    assert np.allclose(basis.coef[reg, MINUS], std)


def test_global_traces_continuous_off_interface_edges(bench40):
    mesh, basis = bench40
    from ifepic.solver import edge_jumps
    u = np.random.default_rng(0).normal(size=len(mesh.nodes))
    regular = np.setdiff1d(mesh.interior_edges, mesh.interface_edges)
    assert np.abs(edge_jumps(mesh, basis, u, regular)).max() < 1e-12
    assert np.abs(edge_jumps(mesh, basis, u, mesh.interface_edges)).max() > 1e-6


@settings(max_examples=40, deadline=None)
@given(cx=st.floats(-0.3, 0.3), cy=st.floats(-0.3, 0.3), r=st.floats(0.2, 0.6),
       log_ratio=st.floats(-3, 3))
def test_random_geometry_constraints(cx, cy, r, log_ratio):
    mesh = build_mesh(CartesianGrid.square(12), Circle((cx, cy), r))
    bm, bp = 1.0, 10.0 ** log_ratio
    basis = BasisTable(mesh, bm, bp)
    for t, cut in mesh.cuts.items():
        res = constraint_residuals(basis.local(t), cut)
        assert np.abs(res).max() < 1e-10
    s = basis.coef.sum(axis=2)
    assert np.abs(s[..., 2] - 1).max() < 1e-12


def test_invalid_coefficients_rejected():
    mesh = build_mesh(CartesianGrid.square(4), Circle(radius=0.3))
    with pytest.raises(ValueError):
        BasisTable(mesh, 0.0, 1.0)
