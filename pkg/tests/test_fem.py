import numpy as np
import pytest
from hypothesis import given, strategies as st

from mplg.fem import FESpace, discrete_norms, interpolate
from mplg.lagrange import shape_values
from mplg.mesh import build_box_mesh


@pytest.fixture(params=[(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)], ids=lambda p: f"d{p[0]}k{p[1]}")
def space(request):
    dim, k = request.param
    return FESpace(build_box_mesh(dim, {1: 6, 2: 4, 3: 2}[dim]), k)


def test_dof_count(space):
    assert space.dof_count == (space.degree * space.mesh.division + 1) ** space.dim
    assert space.cell_dofs.max() == space.dof_count - 1
    assert len(np.unique(space.cell_dofs)) == space.dof_count


def test_mass_integrates_constants(space):
    M = space.mass_matrix
    ones = np.ones(space.dof_count)
    assert ones @ (M @ ones) == pytest.approx(2.0**space.dim, rel=1e-13)


def test_stiffness_kills_constants(space):
    K = space.stiffness_matrix
    assert np.abs(K @ np.ones(space.dof_count)).max() < 1e-12


def test_matrices_exactly_symmetric(space):
    for A in (space.mass_matrix, space.stiffness_matrix):
        assert (A != A.T).nnz == 0


def test_mass_positive_definite(space):
    w = np.linalg.eigvalsh(space.mass_matrix.toarray())
    assert w.min() > 0


def test_reproduces_polynomials(space):
    rng = np.random.default_rng(1)
    c = rng.normal(size=space.dim)
    if space.degree == 1:
        f = lambda x: 0.3 + x @ c
    else:
        f = lambda x: 0.3 + x @ c + (x[:, 0] * x[:, -1])
    u = interpolate(space, f)
    x = rng.uniform(-1, 1, (50, space.dim))
    assert np.allclose(u(x), f(x), atol=1e-13)


def test_energy_of_linear_function(space):
    # |grad(x_0)|^2 over the box is 2^d, its L2 norm squared is (2/3) 2^(d-1)
    u = interpolate(space, lambda x: x[:, 0])
    n = discrete_norms(u)
    assert n["h1_semi"] ** 2 == pytest.approx(2.0**space.dim, rel=1e-12)
    assert n["l2"] ** 2 == pytest.approx(2.0 / 3.0 * 2.0 ** (space.dim - 1), rel=1e-12)


def test_load_vector_sums(space):
    b = space.assemble_load(f=lambda x, t: np.ones(len(x)))
    assert b.sum() == pytest.approx(2.0**space.dim, rel=1e-13)
    g = space.assemble_load(g=lambda x, t: np.ones(len(x)))
    assert g.sum() == pytest.approx(space.mesh.domain.boundary_measure, rel=1e-13)


def test_load_of_linear_source_matches_mass_product(space):
    f = lambda x, t: 1.0 + 2.0 * x[:, 0] - x[:, -1]
    b = space.assemble_load(f=f)
    fh = interpolate(space, lambda x: f(x, 0.0)).coeffs
    assert np.allclose(b, space.mass_matrix @ fh, atol=1e-14)


def test_1d_p1_rows():
    V = FESpace(build_box_mesh(1, 2), 1)
    M = V.mass_matrix.toarray()
    K = V.stiffness_matrix.toarray()
    assert np.allclose(M[1], [1 / 6, 2 / 3, 1 / 6])
    assert np.allclose(K[1], [-1, 2, -1])


@given(st.integers(2, 3), st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_shape_functions_partition_unity(dim, raw):
    lam = np.array(raw[: dim + 1]) + 1e-3
    lam = lam / lam.sum()
    for k in (1, 2):
        assert shape_values(k, lam).sum() == pytest.approx(1.0, abs=1e-14)


def test_bad_degree():
    with pytest.raises(ValueError):
        FESpace(build_box_mesh(1, 2), 3)
