"""Triangle quadrature rules in barycentric form."""
import numpy as np

# Dunavant's 6-point rule, exact for degree 4.
_S = np.sqrt(38.0 - 44.0 * np.sqrt(0.4))
_T = np.sqrt(213125.0 - 53320.0 * np.sqrt(10.0))
_A1 = (8.0 - np.sqrt(10.0) + _S) / 18.0
_A2 = (8.0 - np.sqrt(10.0) - _S) / 18.0
_W1 = (620.0 + _T) / 3720.0
_W2 = (620.0 - _T) / 3720.0

_D4_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1],
    [_A1, 1 - 2 * _A1, _A1],
    [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2],
    [_A2, 1 - 2 * _A2, _A2],
    [1 - 2 * _A2, _A2, _A2],
])
_D4_W = np.array([_W1] * 3 + [_W2] * 3)


def collapsed_gauss(n: int):
    """Duffy-collapsed Gauss-Legendre rule with ``n * n`` points.

    Exact for polynomials of degree ``2 n - 2``.
    """
    g, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (g + 1.0)
    ws = 0.5 * w
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    l1 = u.ravel()
    l2 = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel() * 2.0
    bary = np.column_stack([1.0 - l1 - l2, l1, l2])
    return bary, weights


def triangle_rule(degree: int = 4):
    """Barycentric points and weights summing to one, exact to ``degree``."""
    if degree <= 4:
        return _D4_BARY, _D4_W
    return collapsed_gauss((degree + 3) // 2)


def map_points(verts, bary) -> np.ndarray:
    """Physical quadrature points, ``(n_tri, n_q, 2)`` from ``(n_tri, 3, 2)``."""
    return np.einsum("qk,tkd->tqd", bary, verts)
