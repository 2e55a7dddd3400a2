"""Upwind points ``x - dt*u(x, t)`` and their Jacobian determinants."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem import FEFunction, evaluate_many
from .mesh import CellLocation, INSIDE_TOL

JACOBIAN_RANGE = (0.5, 1.5)


class JacobianRangeWarning(UserWarning):
    """Jacobian of an upwind map left [1/2, 3/2]; the time step is too large for the flow."""


@dataclass(frozen=True)
class VelocityField:
    """Velocity and its spatial gradient.

    ``value(x, t)`` maps points (n, d) to (n, d); ``gradient(x, t)`` maps to
    (n, d, d) with entry ``[i, j] = du_i/dx_j``.
    """

    value: Callable
    gradient: Callable
    w1inf_seminorm: float | None = None

    @classmethod
    def zero(cls, dim: int) -> "VelocityField":
        return cls(
            lambda x, t: np.zeros((len(x), dim)),
            lambda x, t: np.zeros((len(x), dim, dim)),
            0.0,
        )

    @classmethod
    def constant(cls, c) -> "VelocityField":
        c = np.asarray(c, dtype=float)
        d = len(c)
        return cls(
            lambda x, t: np.broadcast_to(c, (len(x), d)).copy(),
            lambda x, t: np.zeros((len(x), d, d)),
            0.0,
        )

    @classmethod
    def linear(cls, A, b=None) -> "VelocityField":
        """u(x) = A x + b."""
        A = np.asarray(A, dtype=float)
        b = np.zeros(len(A)) if b is None else np.asarray(b, dtype=float)
        return cls(
            lambda x, t: np.asarray(x) @ A.T + b,
            lambda x, t: np.broadcast_to(A, (len(x),) + A.shape).copy(),
            float(np.abs(A).max()),
        )


@dataclass(frozen=True)
class CharacteristicFoot:
    foot: np.ndarray
    jacobian: float
    location: CellLocation


def _points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def upwind_point(u: VelocityField, t: float, dt: float, x) -> np.ndarray:
    pts, single = _points(x)
    foot = pts - dt * np.asarray(u.value(pts, t))
    return foot[0] if single else foot


def det_identity_minus(dt: float, grad: np.ndarray) -> np.ndarray:
    """det(I - dt*G) for a stack of (d, d) matrices, by cofactor expansion."""
    grad = np.asarray(grad, dtype=float)
    d = grad.shape[-1]
    m = np.eye(d) - dt * grad
    if d == 1:
        return m[..., 0, 0]
    if d == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def check_jacobian_range(gamma: np.ndarray, context: str = "") -> int:
    """Count values outside [1/2, 3/2] and warn once if there are any."""
    lo, hi = JACOBIAN_RANGE
    bad = int(np.count_nonzero((gamma < lo) | (gamma > hi)))
    if bad:
        warnings.warn(
            f"{bad} Jacobian value(s) outside [{lo}, {hi}] (range {gamma.min():.4g}..{gamma.max():.4g}){context}",
            JacobianRangeWarning,
            stacklevel=3,
        )
    return bad


def jacobian_det(u: VelocityField, t: float, dt: float, x, warn: bool = True):
    pts, single = _points(x)
    gamma = det_identity_minus(dt, u.gradient(pts, t))
    if warn:
        check_jacobian_range(gamma)
    return float(gamma[0]) if single else gamma


def divergence_and_deltas(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trace, second and third invariant terms of the velocity gradient.

    ``delta1`` sums the principal 2x2 minors and ``delta2`` is minus the
    determinant, each written out entry by entry.
    """
    g = np.asarray(grad, dtype=float)
    d = g.shape[-1]
    div = np.trace(g, axis1=-2, axis2=-1)
    zero = np.zeros(g.shape[:-2])
    if d == 1:
        return div, zero, zero
    u11, u12 = g[..., 0, 0], g[..., 0, 1]
    u21, u22 = g[..., 1, 0], g[..., 1, 1]
    if d == 2:
        return div, u11 * u22 - u12 * u21, zero
    u13, u23 = g[..., 0, 2], g[..., 1, 2]
    u31, u32, u33 = g[..., 2, 0], g[..., 2, 1], g[..., 2, 2]
    delta1 = u11 * u22 + u22 * u33 + u33 * u11 - u12 * u21 - u23 * u32 - u31 * u13
    delta2 = (
        -u11 * u22 * u33
        - u12 * u23 * u31
        - u13 * u21 * u32
        + u11 * u23 * u32
        + u13 * u22 * u31
        + u12 * u21 * u33
    )
    return div, delta1, delta2


def expansion_check(u: VelocityField, t: float, dt: float, x) -> dict:
    """Jacobian computed directly and via its polynomial expansion in ``dt``."""
    pts, single = _points(x)
    grad = u.gradient(pts, t)
    direct = det_identity_minus(dt, grad)
    div, d1, d2 = divergence_and_deltas(grad)
    expanded = 1.0 - dt * div + dt**2 * d1 + dt**3 * d2
    if single:
        return {"direct": float(direct[0]), "expanded": float(expanded[0])}
    return {"direct": direct, "expanded": expanded}


def characteristic_foot(u: VelocityField, t: float, dt: float, x, mesh) -> CharacteristicFoot:
    x = np.asarray(x, dtype=float)
    foot = upwind_point(u, t, dt, x)
    cells, bary = mesh.locate_points(foot[None, :])
    loc = CellLocation(int(cells[0]), bary[0], bool(np.all(bary[0] >= -INSIDE_TOL)))
    return CharacteristicFoot(foot, jacobian_det(u, t, dt, x, warn=False), loc)


def composed_term(fun: FEFunction, u: VelocityField, t: float, dt_multiplier: int, dt: float, x, weighted: bool = True):
    """``fun(X(x)) * gamma(x)`` with ``X = x - m*dt*u(x, t)``, ``m`` in {1, 2}.

    Vectorised over points (n, d).  With ``weighted=False`` the Jacobian
    factor is dropped (the non-conservative variant).
    """
    if dt_multiplier not in (1, 2):
        raise ValueError("dt_multiplier must be 1 or 2")
    pts, single = _points(x)
    step = dt_multiplier * dt
    foot = upwind_point(u, t, step, pts)
    cells, bary = fun.space.mesh.locate_points(foot)
    vals = evaluate_many(fun, cells, bary)
    if weighted:
        vals = vals * jacobian_det(u, t, step, pts, warn=False)
    return float(vals[0]) if single else vals
