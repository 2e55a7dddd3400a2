"""NumPy implementations of the hot kernels.

Same signatures as the compiled ``_ckernels`` module; used when the extension
is not built or when ``MPLG_PURE_PYTHON=1``.
"""
from __future__ import annotations

import numpy as np

from .lagrange import shape_values


def locate(points, lower, spacing, N, perms, stored, lookup):
    n, d = points.shape
    s = (points - lower) / spacing
    sc = np.clip(s, 0.0, N)
    # lowest lattice index containing the (clamped) point
    idx = np.clip(np.ceil(sc) - 1.0, 0, N - 1).astype(np.int64)
    xi = s - idx
    xic = sc - idx
    if d == 1:
        sigma = np.zeros((n, 1), dtype=np.int64)
    else:
        sigma = np.argsort(-xic, axis=1, kind="stable")
    code = sigma @ (d ** np.arange(d))
    p = lookup[code]
    xs = np.take_along_axis(xi, sigma, axis=1)
    path = np.empty((n, d + 1))
    path[:, 0] = 1.0 - xs[:, 0]
    path[:, 1:d] = xs[:, :-1] - xs[:, 1:]
    path[:, d] = xs[:, -1]
    bary = np.take_along_axis(path, stored[p], axis=1)
    lattice = idx @ (N ** np.arange(d))
    return lattice * len(perms) + p, bary


def evaluate(coeffs, cell_dofs, degree, cells, bary):
    phi = shape_values(degree, bary)
    return np.einsum("na,na->n", coeffs[cell_dofs[cells]], phi)


def composed_accumulate(out, feet, scale, test_dofs, test_basis, coeffs, cell_dofs, degree,
                        lower, spacing, N, perms, stored, lookup):
    """out[test_dofs[c, a]] += sum_q scale[c, q] * f_h(feet[c, q]) * test_basis[q, a].

    ``f_h`` is the finite element function with ``coeffs``; feet outside the
    domain use the polynomial of the clamp-located cell.
    """
    nc, nq, d = feet.shape
    cells, bary = locate(feet.reshape(-1, d), lower, spacing, N, perms, stored, lookup)
    vals = evaluate(coeffs, cell_dofs, degree, cells, bary).reshape(nc, nq) * scale
    local = vals @ test_basis  # (nc, nloc)
    out += np.bincount(test_dofs.ravel(), weights=local.ravel(), minlength=len(out))
