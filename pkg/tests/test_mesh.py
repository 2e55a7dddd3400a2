from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mplg.mesh import Domain, build_box_mesh, locate_point, mesh_statistics, walk_locate


@pytest.mark.parametrize("dim,N", [(1, 5), (2, 4), (3, 3)])
def test_counts_and_volume(dim, N):
    mesh = build_box_mesh(dim, N)
    assert mesh.num_cells == factorial(dim) * N**dim
    assert mesh.num_vertices == (N + 1) ** dim
    assert mesh.cell_volumes.sum() == pytest.approx(2.0**dim, rel=1e-12)
    assert np.all(mesh.jacobian_dets > 0)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_mesh_size(dim):
    mesh = build_box_mesh(dim, 8)
    stats = mesh_statistics(mesh)
    assert stats["h"] == pytest.approx(np.sqrt(dim) * 0.25)
    assert stats["cell_count"] == mesh.num_cells


@pytest.mark.parametrize("dim", [2, 3])
def test_conforming_facets(dim):
    mesh = build_box_mesh(dim, 3)
    nbr = mesh.facet_neighbors
    # each interior facet is shared by exactly two cells, reciprocally
    for c in range(mesh.num_cells):
        for k in range(dim + 1):
            other = nbr[c, k]
            if other >= 0:
                assert c in nbr[other]
    boundary = int(np.count_nonzero(nbr < 0))
    assert boundary == len(mesh.boundary_facets) == 2 * dim * factorial(dim - 1) * 3 ** (dim - 1)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_boundary_measure(dim):
    mesh = build_box_mesh(dim, 4)
    fv = mesh.vertices[mesh.boundary_facets]
    if dim == 1:
        total = len(fv)
    elif dim == 2:
        total = np.linalg.norm(fv[:, 1] - fv[:, 0], axis=1).sum()
    else:
        total = 0.5 * np.linalg.norm(np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0]), axis=1).sum()
    assert total == pytest.approx(Domain.cube(dim).boundary_measure)


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_box_mesh(4, 2)
    with pytest.raises(ValueError):
        build_box_mesh(2, 0)


def test_1d_location_examples():
    mesh = build_box_mesh(1, 4)
    loc = locate_point(mesh, [0.1])
    assert loc.cell_index == 2 and loc.inside
    assert np.allclose(loc.barycentric, [0.8, 0.2])
    out = locate_point(mesh, [-1.05])
    assert out.cell_index == 0 and not out.inside
    assert np.allclose(out.barycentric, [1.1, -0.1])


def test_vertex_on_shared_boundary_is_found():
    mesh = build_box_mesh(1, 4)
    loc = locate_point(mesh, [0.0])
    assert loc.inside
    assert np.isclose(loc.barycentric.max(), 1.0)


@given(st.integers(1, 3), st.integers(1, 6), st.data())
def test_location_reconstructs_point(dim, N, data):
    mesh = build_box_mesh(dim, N)
    x = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=dim, max_size=dim)))
    loc = locate_point(mesh, x)
    assert loc.inside
    assert loc.barycentric.min() >= -1e-12
    verts = mesh.vertices[mesh.cells[loc.cell_index]]
    assert np.allclose(loc.barycentric @ verts, x, atol=1e-13)


@given(st.integers(2, 3), st.integers(1, 5), st.data())
def test_walk_agrees_with_lattice_location(dim, N, data):
    mesh = build_box_mesh(dim, N)
    x = np.array(data.draw(st.lists(st.floats(-0.999, 0.999), min_size=dim, max_size=dim)))
    a = locate_point(mesh, x)
    b = walk_locate(mesh, x, start=data.draw(st.integers(0, mesh.num_cells - 1)))
    assert b.inside
    # on shared faces the two may pick different cells but the point is the same
    va = a.barycentric @ mesh.vertices[mesh.cells[a.cell_index]]
    vb = b.barycentric @ mesh.vertices[mesh.cells[b.cell_index]]
    assert np.allclose(va, vb, atol=1e-12)
    if a.barycentric.min() > 1e-9:
        assert a.cell_index == b.cell_index


def test_exterior_points_extrapolate_from_boundary_cell():
    mesh = build_box_mesh(2, 4)
    cells, bary = mesh.locate_points(np.array([[1.2, 0.3], [-1.5, -1.5]]))
    for c, lam, x in zip(cells, bary, [[1.2, 0.3], [-1.5, -1.5]]):
        assert lam.min() < 0
        assert np.allclose(lam @ mesh.vertices[mesh.cells[c]], x)
