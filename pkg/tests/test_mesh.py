import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifepic.mesh import (INTERFACE, MINUS, PLUS, CartesianGrid, Circle, FunctionLevelSet,
                         GeometryError, OutOfDomainError, build_mesh, compute_cut, edge_root)

R0 = np.pi / 12


def find_triangle(mesh, corners):
    want = {tuple(np.round(c, 12)) for c in corners}
    for t, tri in enumerate(mesh.triangles):
        got = {tuple(np.round(p, 12)) for p in mesh.nodes[tri]}
        if got == want:
            return t
    raise LookupError(corners)


def test_grid_spacing_and_node_positions():
    g = CartesianGrid(-1, 1, 0, 3, 4, 6)
    assert g.hx == 0.5 and g.hy == 0.5
    xy = g.node_coordinates()
    assert len(xy) == 35
    # node (i, j) sits at (xmin + i hx, ymin + j hy), j outer
    assert np.allclose(xy[g.node_index(3, 2)], [0.5, 1.0])


def test_grid_rejects_too_few_cells():
    with pytest.raises(ValueError):
        CartesianGrid(0, 1, 0, 1, 1, 4)


def test_control_volumes_tile_the_box():
    g = CartesianGrid(-1, 1, -2, 2, 5, 7)
    assert g.control_volumes().sum() == pytest.approx(g.area, rel=1e-14)


def test_classification_examples():
    mesh = build_mesh(CartesianGrid.square(20), Circle(radius=R0))
    t = find_triangle(mesh, [(0, 0), (0.1, 0), (0.1, 0.1)])
    phi = [x * x + y * y - R0 ** 2 for x, y in [(0, 0), (0.1, 0), (0.1, 0.1)]]
    assert max(phi) < 0
    assert mesh.kind[t] == MINUS
    t = find_triangle(mesh, [(0.2, 0), (0.3, 0), (0.3, 0.1)])
    assert 0.2 ** 2 < R0 ** 2 < 0.3 ** 2
    assert mesh.kind[t] == INTERFACE


def test_conductor_covering_domain():
    mesh = build_mesh(CartesianGrid.square(10), Circle(radius=10.0))
    assert np.all(mesh.kind == MINUS)
    assert len(mesh.interface_edges) == 0
    assert not mesh.cuts


def test_triangulation_structure(bench40):
    mesh, _ = bench40
    g = mesh.grid
    assert len(mesh.triangles) == 2 * g.n_cells
    assert mesh.tri_area.sum() == pytest.approx(g.area, rel=1e-12)
    assert np.all(mesh.edge_tris[mesh.interior_edges] >= 0)
    # every cell split along the lower-left to upper-right diagonal
    c = g.cell_corners(mesh.tri_cell)
    tri = mesh.triangles
    assert np.all(tri[:, 0] == c[:, 0]) and np.all(tri[:, 2] == np.where(mesh.tri_tag == 0, c[:, 2], c[:, 3]))
    # a triangle is an interface triangle iff two of its edges change sign
    n_cut = mesh.edge_sign_change[mesh.tri_edges].sum(axis=1)
    assert np.all((n_cut == 2) == (mesh.kind == INTERFACE))
    assert np.all(mesh.edge_sign_change[mesh.interface_edges])


def test_cut_geometry_on_benchmark(bench40):
    mesh, _ = bench40
    assert mesh.cuts
    for t, cut in mesh.cuts.items():
        assert abs(cut.area_plus + cut.area_minus - mesh.tri_area[t]) <= 1e-12 * mesh.tri_area[t]
        assert abs(Circle(radius=R0).at(cut.D)) < 1e-10
        assert abs(Circle(radius=R0).at(cut.E)) < 1e-10
        assert np.linalg.norm(cut.normal) == pytest.approx(1.0, abs=1e-14)
        # outward from the conductor: normal agrees with the radial direction
        mid = 0.5 * (cut.D + cut.E)
        assert cut.normal @ mid > 0


def test_reference_cut():
    ls = FunctionLevelSet(lambda x, y: x + y - 0.5)
    cut = compute_cut([(0, 0), (1, 0), (0, 1)], ls)
    assert np.allclose(sorted(map(tuple, [cut.D, cut.E])), [(0.0, 0.5), (0.5, 0.0)], atol=1e-12)
    assert cut.area_minus == pytest.approx(0.125, abs=1e-12)
    assert cut.area_plus == pytest.approx(0.375, abs=1e-12)


def test_cut_of_regular_triangle_rejected():
    with pytest.raises(GeometryError):
        compute_cut([(0, 0), (1, 0), (0, 1)], FunctionLevelSet(lambda x, y: x + y + 5))


def test_edge_root_examples():
    c = Circle(radius=R0)
    assert np.allclose(edge_root((0.2, 0), (0.3, 0), c), (R0, 0), atol=1e-11)
    assert np.allclose(edge_root((-R0 - 0.1, 0), (-R0 + 0.1, 0), c), (-R0, 0), atol=1e-11)
    on = np.array([R0, 0.0])
    line = FunctionLevelSet(lambda x, y: x - 0.25)
    assert np.array_equal(edge_root((0.25, 0.0), (1.0, 0.0), line), [0.25, 0.0])
    assert c.at(on) == pytest.approx(0.0, abs=1e-15)


def test_edge_root_requires_bracket():
    with pytest.raises(GeometryError):
        edge_root((0.5, 0), (0.6, 0), Circle(radius=R0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_edge_root_residual(theta, din, dout):
    c = Circle(radius=R0)
    u = np.array([np.cos(theta), np.sin(theta)])
    p1 = (R0 - din * R0) * u
    p2 = (R0 + dout) * u
    q = edge_root(p1, p2, c)
    assert abs(c.at(q)) < 1e-10
    assert np.linalg.norm(q) == pytest.approx(R0, abs=1e-11)


def test_locate_conventions():
    mesh = build_mesh(CartesianGrid.square(20), Circle(radius=R0))
    g = mesh.grid
    ci, cj, _, _ = g.locate_cell([[-1, -1], [0.95, 0.95], [1, 1]])
    assert list(zip(ci, cj)) == [(0, 0), (19, 19), (19, 19)]
    # an interior node goes to the lower-index cell
    ci, cj, _, _ = g.locate_cell([[0.0, 0.0]])
    assert (ci[0], cj[0]) == (9, 9)
    with pytest.raises(OutOfDomainError):
        g.locate_cell([[1.0 + 1e-9, 0.0]])
    cell, tri, side = mesh.locate([[0.5, 0.5], [0.01, 0.0], [0.52, 0.57]])
    assert list(side) == [PLUS, MINUS, PLUS]
    assert tri[2] % 2 == 1  # above the diagonal


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=20))
def test_locate_is_total(points):
    mesh = build_mesh(CartesianGrid.square(8), Circle(radius=0.3))
    cell, tri, _ = mesh.locate(points)
    assert np.all((cell >= 0) & (cell < mesh.grid.n_cells))
    assert np.all(tri // 2 == cell)


def test_node_on_interface_counts_inside():
    ls = FunctionLevelSet(lambda x, y: x - 0.0)  # the line x = 0 passes through nodes
    mesh = build_mesh(CartesianGrid.square(4), ls)
    on = np.isclose(mesh.nodes[:, 0], 0.0)
    assert np.all(mesh.node_inside[on])
    assert np.all(np.isin(mesh.kind, (MINUS, PLUS, INTERFACE)))
