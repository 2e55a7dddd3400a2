"""Structured simplicial meshes of boxes and point location on them.

Each lattice cell (interval, square or cube) is split into ``d!`` simplices by
the Kuhn subdivision: the simplex with axis ordering ``s`` is the convex hull
of the path ``v0, v0 + e_s[0], v0 + e_s[0] + e_s[1], ...``.  In 2D that is the
split of every square along the same (lower-left to upper-right) diagonal.

Because the lattice is uniform, point location is index arithmetic: pick the
lattice cell, then the simplex whose axis ordering sorts the local
coordinates.  Points outside the box are located in the cell containing their
projection onto the box, and their barycentric coordinates relative to that
cell are returned unclamped (some negative).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from math import factorial

import numpy as np

from . import kernels

INSIDE_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not 1 <= len(self.lower) <= 3:
            raise ValueError("lower/upper must be vectors of equal length 1..3")
        if any(lo >= up for lo, up in zip(self.lower, self.upper)):
            raise ValueError("need lower < upper on every axis")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def boundary_measure(self) -> float:
        ext = np.subtract(self.upper, self.lower)
        if self.dim == 1:
            return 2.0
        total = 0.0
        for a in range(self.dim):
            total += 2.0 * float(np.prod(np.delete(ext, a)))
        return total

    @classmethod
    def cube(cls, dim: int) -> "Domain":
        """The box (-1, 1)^dim."""
        return cls((-1.0,) * dim, (1.0,) * dim)


@dataclass(frozen=True)
class CellLocation:
    cell_index: int
    barycentric: np.ndarray
    inside: bool


def _kuhn_tables(dim: int):
    """Permutation bookkeeping shared by mesh generation and point location.

    Returns ``perms`` (d!, d) axis orderings, ``stored`` (d!, d+1) giving for
    each stored local vertex its position along the Kuhn path, and
    ``lookup`` mapping the base-d code of an ordering to its index.
    """
    perms = np.array(list(permutations(range(dim))), dtype=np.int64)
    stored = np.tile(np.arange(dim + 1, dtype=np.int64), (len(perms), 1))
    lookup = np.full(dim**dim, -1, dtype=np.int64)
    for p, sigma in enumerate(perms):
        # orientation of the path simplex is the sign of the permutation
        parity = sum(1 for i in range(dim) for j in range(i + 1, dim) if sigma[i] > sigma[j]) % 2
        if parity:
            stored[p, [dim - 1, dim]] = stored[p, [dim, dim - 1]]
        lookup[int(np.dot(sigma, dim ** np.arange(dim)))] = p
    return perms, stored, lookup


@dataclass(eq=False)
class Mesh:
    domain: Domain
    division: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    boundary_tags: np.ndarray
    boundary_cells: np.ndarray
    boundary_local: np.ndarray  # local index of the cell vertex opposite each facet
    _tables: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def spacing(self) -> np.ndarray:
        """Lattice spacing per axis (2/N on the unit box (-1,1)^d)."""
        return (np.asarray(self.domain.upper) - np.asarray(self.domain.lower)) / self.division

    @cached_property
    def h(self) -> float:
        """Maximum cell diameter."""
        # all cells are congruent up to the Kuhn permutation, so check a few
        sample = self.vertices[self.cells[: factorial(self.dim)]]
        diam = 0.0
        for a in range(self.dim + 1):
            for b in range(a + 1, self.dim + 1):
                diam = max(diam, float(np.max(np.linalg.norm(sample[:, a] - sample[:, b], axis=-1))))
        return diam

    @cached_property
    def jacobians(self) -> np.ndarray:
        v = self.vertices[self.cells]
        return np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)

    @cached_property
    def jacobian_dets(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return np.abs(self.jacobian_dets) / factorial(self.dim)

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(ncells, d+1, d): gradients of the barycentric coordinates."""
        inv = np.linalg.inv(self.jacobians)
        g = np.empty((self.num_cells, self.dim + 1, self.dim))
        g[:, 1:] = inv
        g[:, 0] = -inv.sum(axis=1)
        return g

    @cached_property
    def facet_neighbors(self) -> np.ndarray:
        """(ncells, d+1): cell across the facet opposite each local vertex, -1 on the boundary."""
        d = self.dim
        local = np.array([[j for j in range(d + 1) if j != k] for k in range(d + 1)])
        facets = np.sort(self.cells[:, local], axis=-1).reshape(-1, d)
        _, inverse = np.unique(facets, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind="stable")
        same = np.nonzero(inverse[order][1:] == inverse[order][:-1])[0]
        a, b = order[same], order[same + 1]
        nbr = np.full(len(facets), -1, dtype=np.int64)
        nbr[a] = b // (d + 1)
        nbr[b] = a // (d + 1)
        return nbr.reshape(-1, d + 1)

    def cell_barycentric(self, cell: int, x) -> np.ndarray:
        """Barycentric coordinates of ``x`` relative to ``cell`` (extrapolated if outside)."""
        x = np.asarray(x, dtype=float)
        v0 = self.vertices[self.cells[cell, 0]]
        rest = np.linalg.solve(self.jacobians[cell], x - v0)
        return np.concatenate([[1.0 - rest.sum()], rest])

    def locate_points(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised point location: returns ``(cells, barycentric)``."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, self.dim))
        perms, stored, lookup = self._tables
        return kernels.locate(
            pts,
            np.asarray(self.domain.lower, dtype=float),
            self.spacing,
            self.division,
            perms,
            stored,
            lookup,
        )

    def physical_points(self, rule_points: np.ndarray, cells: np.ndarray | slice | None = None) -> np.ndarray:
        """Map barycentric points (nq, d+1) into each selected cell: (nc, nq, d)."""
        sel = self.cells if cells is None else self.cells[cells]
        return np.einsum("qa,caj->cqj", rule_points, self.vertices[sel])


def build_box_mesh(dim: int, N: int, domain: Domain | None = None) -> Mesh:
    """Uniform Kuhn-subdivided mesh with ``N`` lattice cells per axis."""
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim!r}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    domain = domain or Domain.cube(dim)
    if domain.dim != dim:
        raise ValueError("domain dimension does not match dim")

    lower = np.asarray(domain.lower, dtype=float)
    step = (np.asarray(domain.upper, dtype=float) - lower) / N
    axes = [lower[a] + step[a] * np.arange(N + 1) for a in range(dim)]
    # axis 0 varies fastest
    grid = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([g.ravel(order="F") for g in grid])
    vstride = (N + 1) ** np.arange(dim)

    perms, stored, lookup = _kuhn_tables(dim)
    corners = np.indices((N,) * dim).reshape(dim, -1, order="F").T
    base = corners @ vstride  # lattice cells in lexicographic order, axis 0 fastest
    nperm = len(perms)
    cells = np.empty((len(base), nperm, dim + 1), dtype=np.int64)
    for p, sigma in enumerate(perms):
        path = np.concatenate([[0], np.cumsum(vstride[sigma])])
        cells[:, p, :] = base[:, None] + path[stored[p]][None, :]
    cells = cells.reshape(-1, dim + 1)

    facets, tags, owners, opposite = _boundary_facets(vertices, cells, domain)
    return Mesh(domain, N, vertices, cells, facets, tags, owners, opposite, (perms, stored, lookup))


def _boundary_facets(vertices, cells, domain: Domain):
    dim = domain.dim
    lo = np.asarray(domain.lower)
    up = np.asarray(domain.upper)
    out_f, out_t, out_c, out_k = [], [], [], []
    for k in range(dim + 1):
        keep = [j for j in range(dim + 1) if j != k]
        fverts = cells[:, keep]
        coords = vertices[fverts]  # (nc, d, d)
        for a in range(dim):
            for side, bound in ((0, lo[a]), (1, up[a])):
                on = np.all(np.abs(coords[:, :, a] - bound) < 1e-12 * max(1.0, abs(bound)), axis=1)
                idx = np.nonzero(on)[0]
                out_f.append(fverts[idx])
                out_t.append(np.full(len(idx), 2 * a + side, dtype=np.int64))
                out_c.append(idx)
                out_k.append(np.full(len(idx), k, dtype=np.int64))
    facets = np.concatenate(out_f)
    tags = np.concatenate(out_t)
    owners = np.concatenate(out_c)
    opposite = np.concatenate(out_k)
    order = np.lexsort((tags, owners))
    return facets[order], tags[order], owners[order], opposite[order]


def locate_point(mesh: Mesh, x) -> CellLocation:
    cells, bary = mesh.locate_points(np.atleast_1d(np.asarray(x, dtype=float))[None, :])
    lam = bary[0]
    return CellLocation(int(cells[0]), lam, bool(np.all(lam >= -INSIDE_TOL)))


def walk_locate(mesh: Mesh, x, start: int = 0, max_steps: int | None = None) -> CellLocation:
    """Locate ``x`` by walking across facets from ``start``.

    Independent of the lattice arithmetic in :func:`locate_point`; used to
    cross-check it.  For points outside the domain the walk stops at the
    boundary cell it reaches.
    """
    x = np.asarray(x, dtype=float)
    nbr = mesh.facet_neighbors
    cell = int(start)
    max_steps = max_steps or 4 * mesh.num_cells
    for _ in range(max_steps):
        lam = mesh.cell_barycentric(cell, x)
        k = int(np.argmin(lam))
        if lam[k] >= -INSIDE_TOL:
            return CellLocation(cell, lam, True)
        nxt = int(nbr[cell, k])
        if nxt < 0:
            return CellLocation(cell, lam, False)
        cell = nxt
    raise RuntimeError("cell walk did not terminate")


def mesh_statistics(mesh: Mesh) -> dict:
    return {"h": mesh.h, "cell_count": mesh.num_cells, "vertex_count": mesh.num_vertices}
