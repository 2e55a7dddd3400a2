"""P1/P2 Lagrange shape functions written in barycentric coordinates.

Local node order: the ``d+1`` vertices, then (for P2) the edge midpoints in
lexicographic order of their endpoint pairs ``(0,1), (0,2), ..., (d-1,d)``.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np


def local_edges(dim: int) -> np.ndarray:
    return np.array(list(combinations(range(dim + 1), 2)), dtype=np.int64).reshape(-1, 2)


def num_local_nodes(dim: int, degree: int) -> int:
    if degree == 1:
        return dim + 1
    if degree == 2:
        return (dim + 1) * (dim + 2) // 2
    raise ValueError(f"unsupported degree {degree!r}")


def local_nodes(dim: int, degree: int) -> np.ndarray:
    """Barycentric coordinates of the local Lagrange nodes, (nloc, d+1)."""
    eye = np.eye(dim + 1)
    if degree == 1:
        return eye
    mids = [(eye[i] + eye[j]) / 2 for i, j in local_edges(dim)]
    return np.vstack([eye] + mids) if mids else eye


def shape_values(degree: int, lam: np.ndarray) -> np.ndarray:
    """Shape function values at barycentric points ``lam`` (..., d+1) -> (..., nloc)."""
    lam = np.asarray(lam, dtype=float)
    if degree == 1:
        return lam.copy()
    if degree == 2:
        dim = lam.shape[-1] - 1
        edges = local_edges(dim)
        vert = lam * (2.0 * lam - 1.0)
        edge = 4.0 * lam[..., edges[:, 0]] * lam[..., edges[:, 1]]
        return np.concatenate([vert, edge], axis=-1)
    raise ValueError(f"unsupported degree {degree!r}")


def shape_lambda_derivatives(degree: int, lam: np.ndarray) -> np.ndarray:
    """Derivatives of shape functions w.r.t. each barycentric coordinate.

    Returns (..., nloc, d+1).  Physical gradients follow by contracting the
    last axis with the barycentric gradients of the cell.
    """
    lam = np.asarray(lam, dtype=float)
    nb = lam.shape[-1]
    if degree == 1:
        return np.broadcast_to(np.eye(nb), lam.shape[:-1] + (nb, nb)).copy()
    if degree == 2:
        edges = local_edges(nb - 1)
        out = np.zeros(lam.shape[:-1] + (nb + len(edges), nb))
        for a in range(nb):
            out[..., a, a] = 4.0 * lam[..., a] - 1.0
        for e, (i, j) in enumerate(edges):
            out[..., nb + e, i] = 4.0 * lam[..., j]
            out[..., nb + e, j] = 4.0 * lam[..., i]
        return out
    raise ValueError(f"unsupported degree {degree!r}")
