"""Quadrature rules on reference simplices in barycentric coordinates.

All rules store barycentric points of shape (m, dim+1) and weights summing
to one; an integral over a physical simplex T is evaluated as

    |T| * sum_q w_q f(x_q),      x_q = sum_j points[q, j] * vertex_j.

Low-degree rules use classical positive-weight formulas; higher degrees
fall back to the Grundmann-Moller construction (exact to odd degree 2s+1,
signed weights).  Every rule is exactness-tested against closed-form
monomial integrals in the test suite.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int          # declared polynomial exactness
    points: np.ndarray   # (m, dim+1) barycentric coordinates
    weights: np.ndarray  # (m,), sum to 1


def _rule(dim, degree, points, weights):
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return QuadratureRule(dim, degree, points, weights)


def _gauss_segment(npts):
    t, w = np.polynomial.legendre.leggauss(npts)
    lam = (t + 1.0) / 2.0
    points = np.column_stack([1.0 - lam, lam])
    return _rule(1, 2 * npts - 1, points, w / 2.0)


def _triangle_deg2():
    a, b = 2.0 / 3.0, 1.0 / 6.0
    points = [[a, b, b], [b, a, b], [b, b, a]]
    return _rule(2, 2, points, [1.0 / 3.0] * 3)


def _triangle_deg4():
    # classical 6-point rule, two symmetric orbits
    a1, b1, w1 = 0.816847572980459, 0.091576213509771, 0.109951743655322
    a2, b2, w2 = 0.108103018168070, 0.445948490915965, 0.223381589678011
    points, weights = [], []
    for (a, b, w) in ((a1, b1, w1), (a2, b2, w2)):
        points += [[a, b, b], [b, a, b], [b, b, a]]
        weights += [w] * 3
    return _rule(2, 4, points, weights)


def _tet_deg2():
    a = 0.585410196624969
    b = 0.138196601125011
    points = [[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]]
    return _rule(3, 2, points, [0.25] * 4)


def _compositions(total, parts):
    """All tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _grundmann_moller(dim, s):
    """Grundmann-Moller rule of index s on the dim-simplex, degree 2s+1."""
    d = 2 * s + 1
    points, weights = [], []
    for i in range(s + 1):
        denom = d + dim - 2 * i
        coeff = ((-1) ** i * 2 ** (-2 * s) * float(denom) ** d
                 / (factorial(i) * factorial(d + dim - i)))
        for beta in _compositions(s - i, dim + 1):
            points.append([(2 * b + 1) / denom for b in beta])
            weights.append(coeff)
    weights = np.array(weights) * factorial(dim)  # normalize to sum 1
    return _rule(dim, d, np.array(points), weights)


@lru_cache(maxsize=None)
def simplex_rule(dim, degree):
    """Smallest stocked rule on the dim-simplex exact to at least `degree`."""
    if dim == 1:
        npts = max(1, (degree + 2) // 2)
        return _gauss_segment(npts)
    if dim == 2:
        if degree <= 1:
            return _grundmann_moller(2, 0)
        if degree == 2:
            return _triangle_deg2()
        if degree <= 4:
            return _triangle_deg4()
    if dim == 3:
        if degree <= 1:
            return _grundmann_moller(3, 0)
        if degree == 2:
            return _tet_deg2()
    s = max(0, (degree - 1 + 1) // 2)  # smallest s with 2s+1 >= degree
    return _grundmann_moller(dim, s)


def map_points(rule, simplex_vertices):
    """Physical quadrature points for a batch of simplices.

    Parameters
    ----------
    rule : QuadratureRule
    simplex_vertices : (m, dim+1, N) array
        Vertex coordinates of m simplices (N >= dim allows embedded facets).

    Returns
    -------
    (m, q, N) array of physical points.
    """
    return np.einsum("qj,mjk->mqk", rule.points, simplex_vertices)


def monomial_integral_reference(exponents):
    """Exact integral of prod_j lambda_j^a_j over the unit dim-simplex,
    normalized by the simplex measure (i.e. the barycentric mean value)."""
    a = list(exponents)
    dim = len(a) - 1
    num = factorial(dim)
    for ai in a:
        num *= factorial(ai)
    return num / factorial(dim + sum(a))
