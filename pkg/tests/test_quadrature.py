from math import factorial

import numpy as np
import pytest

from ifepic.quadrature import collapsed_gauss, map_points, triangle_rule


def monomial_integral(a, b):
    """Integral of x^a y^b over the unit right triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def integrate(rule, a, b):
    bary, w = rule
    pts = map_points(np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]]), bary)[0]
    return 0.5 * np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4])
def test_degree_four_rule_is_exact(degree):
    rule = triangle_rule(4)
    for a in range(degree + 1):
        b = degree - a
        assert integrate(rule, a, b) == pytest.approx(monomial_integral(a, b), rel=1e-14)


def test_degree_four_rule_shape():
    bary, w = triangle_rule(4)
    assert bary.shape == (6, 3)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(bary.sum(axis=1), 1.0)
    assert np.all(bary > 0)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_collapsed_gauss_exactness(n):
    rule = collapsed_gauss(n)
    top = 2 * n - 2
    for a in range(top + 1):
        b = top - a
        assert integrate(rule, a, b) == pytest.approx(monomial_integral(a, b), rel=1e-12)


def test_high_degree_rule_selected():
    bary, _ = triangle_rule(8)
    assert len(bary) > 6
    assert integrate(triangle_rule(8), 5, 3) == pytest.approx(monomial_integral(5, 3), rel=1e-12)
