import itertools
from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mplg.mesh import build_box_mesh
from mplg.quadrature import facet_rule, integrate_cell, monomial_integral, simplex_rule

DEGREES = {1: 9, 2: 5, 3: 5}


def exponents(nvars, degree):
    for alpha in itertools.product(range(degree + 1), repeat=nvars):
        if sum(alpha) <= degree:
            yield alpha


def dirichlet_integral(alpha):
    # independent oracle: exact rational arithmetic
    num = 1
    for a in alpha:
        num *= factorial(a)
    return Fraction(num, factorial(sum(alpha) + len(alpha) - 1))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_weights_sum_to_reference_volume(dim):
    rule = simplex_rule(dim)
    assert rule.weights.sum() == pytest.approx(1.0 / factorial(dim), abs=1e-15)
    assert np.all(rule.weights > 0)
    assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-15)
    assert np.all(rule.points >= 0)


@pytest.mark.parametrize("dim,npts", [(1, 5), (2, 7), (3, 15)])
def test_point_counts(dim, npts):
    assert simplex_rule(dim).size == npts


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_monomials_exact_up_to_degree(dim):
    rule = simplex_rule(dim)
    for alpha in exponents(dim + 1, DEGREES[dim]):
        approx = rule.weights @ np.prod(rule.points ** np.array(alpha), axis=1)
        assert abs(approx - float(dirichlet_integral(alpha))) <= 1e-13, alpha


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_degree_is_sharp(dim):
    rule = simplex_rule(dim)
    d = DEGREES[dim] + 1
    errs = [
        abs(rule.weights @ np.prod(rule.points ** np.array(a), axis=1) - float(dirichlet_integral(a)))
        for a in exponents(dim + 1, d)
        if sum(a) == d
    ]
    assert max(errs) > 1e-8


@given(st.lists(st.integers(0, 6), min_size=2, max_size=4))
def test_monomial_integral_matches_rational_oracle(alpha):
    assert monomial_integral(alpha) == pytest.approx(float(dirichlet_integral(alpha)), rel=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_facet_rules(dim):
    rule = facet_rule(dim)
    assert rule.weights.sum() == pytest.approx(1.0 / factorial(dim - 1))
    for alpha in exponents(dim, 5):
        approx = rule.weights @ np.prod(rule.points ** np.array(alpha), axis=1)
        assert approx == pytest.approx(float(dirichlet_integral(alpha)), abs=1e-14)


def test_unsupported_dimension():
    with pytest.raises(ValueError):
        simplex_rule(4)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_integrate_cell_linear_function(dim):
    mesh = build_box_mesh(dim, 2)
    rule = simplex_rule(dim)
    cell = mesh.num_cells - 1
    verts = mesh.vertices[mesh.cells[cell]]
    got = integrate_cell(rule, mesh, cell, lambda x: 1.0 + x.sum(axis=1))
    centroid = verts.mean(axis=0)
    assert got == pytest.approx(mesh.cell_volumes[cell] * (1.0 + centroid.sum()), rel=1e-13)
