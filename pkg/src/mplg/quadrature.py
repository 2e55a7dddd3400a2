"""Fixed quadrature rules on reference simplices.

Points are stored in barycentric coordinates, weights sum to the measure of
the reference simplex (``1/d!``).  Integrals over a physical simplex are then
``|det J| * sum(w * f(x_q))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import factorial, sqrt

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int
    points: np.ndarray  # (nq, dim + 1) barycentric
    weights: np.ndarray  # (nq,)

    @property
    def size(self) -> int:
        return len(self.weights)

    def physical_points(self, vertices: np.ndarray) -> np.ndarray:
        """Map the rule onto simplices with the given vertex coordinates.

        ``vertices`` has shape ``(..., dim + 1, sdim)``; the result has shape
        ``(..., nq, sdim)``.
        """
        return np.einsum("qa,...ai->...qi", self.points, vertices)


def _orbit(*coords: float) -> list[tuple[float, ...]]:
    return sorted(set(permutations(coords)))


def _gauss_segment(n: int) -> tuple[np.ndarray, np.ndarray]:
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    return np.column_stack([1.0 - s, s]), 0.5 * w


def _triangle_7() -> tuple[np.ndarray, np.ndarray]:
    r = sqrt(15.0)
    a1 = (6.0 - r) / 21.0
    a2 = (6.0 + r) / 21.0
    pts: list[tuple[float, ...]] = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 80.0]
    for a, w in ((a1, (155.0 - r) / 2400.0), (a2, (155.0 + r) / 2400.0)):
        orb = _orbit(a, a, 1.0 - 2.0 * a)
        pts += orb
        wts += [w] * len(orb)
    return np.array(pts), np.array(wts)


def _tetrahedron_15() -> tuple[np.ndarray, np.ndarray]:
    r = sqrt(15.0)
    pts: list[tuple[float, ...]] = [(0.25, 0.25, 0.25, 0.25)]
    wts = [16.0 / 135.0]
    for a, w in (
        ((7.0 - r) / 34.0, (2665.0 + 14.0 * r) / 37800.0),
        ((7.0 + r) / 34.0, (2665.0 - 14.0 * r) / 37800.0),
    ):
        orb = _orbit(a, a, a, 1.0 - 3.0 * a)
        pts += orb
        wts += [w] * len(orb)
    b = (5.0 - r) / 20.0
    orb = _orbit(b, b, 0.5 - b, 0.5 - b)
    pts += orb
    wts += [10.0 / 189.0] * len(orb)
    return np.array(pts), np.array(wts) / 6.0


def simplex_rule(dim: int) -> QuadratureRule:
    """Cell rule used throughout: 5-point Gauss (degree 9) on intervals,
    7-point degree-5 on triangles, 15-point degree-5 on tetrahedra."""
    if dim == 1:
        pts, wts = _gauss_segment(5)
        return QuadratureRule(1, 9, pts, wts)
    if dim == 2:
        return QuadratureRule(2, 5, *_triangle_7())
    if dim == 3:
        return QuadratureRule(3, 5, *_tetrahedron_15())
    raise ValueError(f"unsupported dimension {dim!r}")


def facet_rule(dim: int) -> QuadratureRule:
    """Rule on the (dim-1)-simplex bounding a dim-dimensional cell."""
    if dim == 1:
        return QuadratureRule(0, 99, np.ones((1, 1)), np.ones(1))
    if dim == 2:
        pts, wts = _gauss_segment(3)
        return QuadratureRule(1, 5, pts, wts)
    if dim == 3:
        return simplex_rule(2)
    raise ValueError(f"unsupported dimension {dim!r}")


def monomial_integral(alpha) -> float:
    """Exact integral of prod(lambda_i**alpha_i) over the reference simplex
    of dimension ``len(alpha) - 1``."""
    d = len(alpha) - 1
    num = 1
    for a in alpha:
        num *= factorial(a)
    return num / factorial(sum(alpha) + d)


def integrate_cell(rule: QuadratureRule, mesh, cell: int, integrand) -> float:
    """Integrate ``integrand`` (vectorised over points of shape (n, d)) over one cell."""
    verts = mesh.vertices[mesh.cells[cell]]
    x = rule.physical_points(verts)
    return float(abs(mesh.jacobian_dets[cell]) * np.dot(rule.weights, integrand(x)))
