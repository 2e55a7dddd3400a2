"""Continuous P1/P2 Lagrange spaces on structured box meshes.

Degrees of freedom sit on the lattice with ``k*N + 1`` nodes per axis and are
numbered lexicographically (axis 0 fastest).  All integrals use the fixed
rules from :mod:`mplg.quadrature`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels
from .lagrange import local_edges, shape_lambda_derivatives, shape_values
from .mesh import CellLocation, Mesh
from .quadrature import facet_rule, simplex_rule

# cells per assembly block; bounds peak memory of 3D runs
CHUNK = 1 << 16


class FESpace:
    """Globally continuous piecewise polynomials of degree ``k`` on ``mesh``."""

    def __init__(self, mesh: Mesh, degree: int = 1):
        if degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {degree!r}")
        self.mesh = mesh
        self.degree = degree
        self.rule = simplex_rule(mesh.dim)
        self.facet_rule = facet_rule(mesh.dim)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def nodes_per_axis(self) -> int:
        return self.degree * self.mesh.division + 1

    @property
    def dof_count(self) -> int:
        return self.nodes_per_axis**self.dim

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        mesh, k = self.mesh, self.degree
        d = mesh.dim
        vlat = np.stack(np.unravel_index(mesh.cells, (mesh.division + 1,) * d, order="F"), axis=-1)
        nodes = [k * vlat]
        if k == 2:
            edges = local_edges(d)
            nodes.append(vlat[:, edges[:, 0]] + vlat[:, edges[:, 1]])
        lattice = np.concatenate(nodes, axis=1)  # (nc, nloc, d)
        stride = self.nodes_per_axis ** np.arange(d)
        return np.ascontiguousarray(lattice @ stride)

    @cached_property
    def dof_points(self) -> np.ndarray:
        d = self.dim
        idx = np.stack(np.unravel_index(np.arange(self.dof_count), (self.nodes_per_axis,) * d, order="F"), axis=-1)
        step = self.mesh.spacing / self.degree
        return np.asarray(self.mesh.domain.lower) + idx * step

    @cached_property
    def vertex_dofs(self) -> np.ndarray:
        """DoF index of every mesh vertex."""
        d = self.dim
        vlat = np.stack(np.unravel_index(np.arange(self.mesh.num_vertices), (self.mesh.division + 1,) * d, order="F"), axis=-1)
        return (self.degree * vlat) @ (self.nodes_per_axis ** np.arange(d))

    @cached_property
    def _reference_tables(self):
        rule = self.rule
        phi = shape_values(self.degree, rule.points)  # (nq, nloc)
        dphi = shape_lambda_derivatives(self.degree, rule.points)  # (nq, nloc, d+1)
        mass = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
        stiff = np.einsum("q,qia,qjb->ijab", rule.weights, dphi, dphi)
        return phi, mass, stiff

    @property
    def test_basis(self) -> np.ndarray:
        """Shape function values at the cell quadrature points, (nq, nloc)."""
        return self._reference_tables[0]

    def chunks(self):
        for start in range(0, self.mesh.num_cells, CHUNK):
            yield slice(start, min(start + CHUNK, self.mesh.num_cells))

    def _assemble(self, local_fn) -> sp.csr_matrix:
        n = self.dof_count
        total = sp.csr_matrix((n, n))
        for blk in self.chunks():
            loc = local_fn(blk)
            loc = 0.5 * (loc + np.swapaxes(loc, 1, 2))  # bitwise symmetric local matrices
            dofs = self.cell_dofs[blk]
            nloc = dofs.shape[1]
            rows = np.repeat(dofs, nloc, axis=1).ravel()
            cols = np.tile(dofs, (1, nloc)).ravel()
            total = total + sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))
        # summation order differs between (i, j) and (j, i); averaging is exact
        total = (0.5 * (total + total.T)).tocsr()
        total.sort_indices()
        return total

    def assemble_mass(self) -> sp.csr_matrix:
        ref = self._reference_tables[1]
        dets = np.abs(self.mesh.jacobian_dets)
        return self._assemble(lambda blk: dets[blk, None, None] * ref[None])

    def assemble_stiffness(self) -> sp.csr_matrix:
        ref = self._reference_tables[2]
        dets = np.abs(self.mesh.jacobian_dets)
        grads = self.mesh.barycentric_gradients

        def local(blk):
            g = grads[blk]
            metric = np.einsum("cak,cbk->cab", g, g)
            return dets[blk, None, None] * np.einsum("ijab,cab->cij", ref, metric)

        return self._assemble(local)

    def assemble_load(self, f=None, g=None, t: float = 0.0) -> np.ndarray:
        """Load vector ``(f(t), psi_i) + [g(t), psi_i]_boundary``.

        ``f(x, t)`` and ``g(x, t)`` take points of shape (n, d); either may be None.
        """
        b = np.zeros(self.dof_count)
        mesh = self.mesh
        if f is not None:
            phi = self.test_basis
            w = self.rule.weights
            dets = np.abs(mesh.jacobian_dets)
            for blk in self.chunks():
                x = mesh.physical_points(self.rule.points, blk)
                vals = np.asarray(f(x.reshape(-1, self.dim), t), dtype=float).reshape(x.shape[:2])
                local = (dets[blk, None] * vals * w) @ phi
                b += np.bincount(self.cell_dofs[blk].ravel(), weights=local.ravel(), minlength=len(b))
        if g is not None and len(mesh.boundary_facets):
            b += self._boundary_load(g, t)
        return b

    def _boundary_load(self, g, t: float) -> np.ndarray:
        mesh, d = self.mesh, self.dim
        frule = self.facet_rule
        owners = mesh.boundary_cells
        opposite = mesh.boundary_local
        nf = len(owners)
        # facet barycentrics -> cell barycentrics
        lam = np.zeros((nf, frule.size, d + 1))
        keep = np.array([[j for j in range(d + 1) if j != k] for k in range(d + 1)])
        cols = keep[opposite]  # (nf, d)
        for j in range(d):
            lam[np.arange(nf)[:, None], np.arange(frule.size)[None, :], cols[:, j][:, None]] = frule.points[None, :, j]
        fverts = mesh.vertices[mesh.boundary_facets]  # (nf, d, d)
        x = np.einsum("fqj,fjk->fqk", lam[:, :, :], mesh.vertices[mesh.cells[owners]])
        if d == 1:
            measure = np.ones(nf)
        else:
            e = np.swapaxes(fverts[:, 1:] - fverts[:, :1], 1, 2)  # (nf, d, d-1)
            measure = np.sqrt(np.linalg.det(np.einsum("fki,fkj->fij", e, e)))
        vals = np.asarray(g(x.reshape(-1, d), t), dtype=float).reshape(nf, frule.size)
        phi = shape_values(self.degree, lam)  # (nf, nq, nloc)
        local = np.einsum("f,q,fq,fqa->fa", measure, frule.weights, vals, phi)
        return np.bincount(self.cell_dofs[owners].ravel(), weights=local.ravel(), minlength=self.dof_count)

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return self.assemble_mass()

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        return self.assemble_stiffness()

    @cached_property
    def mass_row_sums(self) -> np.ndarray:
        """``M @ 1``: integrals of the basis functions, so ``integral(u_h) = mass_row_sums @ c``."""
        return np.asarray(self.mass_matrix.sum(axis=0)).ravel()


@dataclass(eq=False)
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError("coefficient vector does not match the space")

    def __call__(self, points) -> np.ndarray:
        """Evaluate at arbitrary points (n, d), extending polynomially outside the domain."""
        cells, bary = self.space.mesh.locate_points(points)
        return evaluate_many(self, cells, bary)

    def integral(self) -> float:
        return float(self.space.mass_row_sums @ self.coeffs)


def interpolate(space: FESpace, f) -> FEFunction:
    """Lagrange interpolant; ``f`` is vectorised over points of shape (n, d)."""
    vals = np.asarray(f(space.dof_points), dtype=float)
    return FEFunction(space, np.broadcast_to(vals, (space.dof_count,)).copy())


def evaluate_many(fun: FEFunction, cells: np.ndarray, bary: np.ndarray) -> np.ndarray:
    space = fun.space
    return kernels.evaluate(
        fun.coeffs,
        space.cell_dofs,
        space.degree,
        np.ascontiguousarray(cells, dtype=np.int64),
        np.ascontiguousarray(bary, dtype=float),
    )


def evaluate(fun: FEFunction, loc: CellLocation) -> float:
    """Value of the cell polynomial at (possibly extrapolated) barycentric coordinates."""
    return float(evaluate_many(fun, np.array([loc.cell_index]), np.asarray(loc.barycentric)[None, :])[0])


def discrete_norms(fun: FEFunction) -> dict:
    c = fun.coeffs
    space = fun.space
    l2 = float(np.sqrt(max(c @ (space.mass_matrix @ c), 0.0)))
    h1 = float(np.sqrt(max(c @ (space.stiffness_matrix @ c), 0.0)))
    return {"l2": l2, "h1_semi": h1}
