"""Lagrange-Galerkin time steppers.

Three variants share the machinery:

``mp2``  mass-preserving two-step scheme.  Step 1 solves
         ``(M/dt + nu K) c = r1/dt + b``; steps n >= 2 solve
         ``(3M/(2dt) + nu K) c = (4 r1 - r2)/(2dt) + b`` where
         ``r1_i = (phi^{n-1}(X1) gamma, psi_i)`` and
         ``r2_i = (phi^{n-2}(X2) gamma2, psi_i)`` with ``X1 = x - dt u^n``,
         ``X2 = x - 2 dt u^n`` and ``gamma``, ``gamma2`` their Jacobians.
``rt1``  the one-step Jacobian-weighted scheme for every step.
``er2``  the two-step scheme without the Jacobian weights.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .characteristics import JACOBIAN_RANGE, JacobianRangeWarning, det_identity_minus
from .fem import FEFunction, FESpace, interpolate
from .linalg import ConvergenceError, cg_solve
from .problems import ProblemData

HYP_DT_BOUND = 1.0 / 8.0


class Variant(str, Enum):
    MASS_PRESERVING = "mp2"
    RUI_TABATA = "rt1"
    EWING_RUSSELL = "er2"

    @property
    def weighted(self) -> bool:
        return self is not Variant.EWING_RUSSELL

    @property
    def two_step(self) -> bool:
        return self is not Variant.RUI_TABATA


class TimeStepWarning(UserWarning):
    """dt * |u|_{W^{1,inf}} exceeds 1/8; Jacobian bounds are no longer guaranteed."""


@dataclass
class SchemeConfig:
    dt: float
    variant: Variant = Variant.MASS_PRESERVING
    cg_tol: float = 1e-12
    cg_max_iter: int | None = None
    precond: str = "jacobi"
    # remove the component of the algebraic error that changes the total mass
    mass_correction: bool = True

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt!r}")


def num_steps(T: float, dt: float) -> int:
    """floor(T/dt), robust to round-off in dt = c*h**p."""
    return int(math.floor(T / dt * (1.0 + 1e-12) + 1e-12))


@dataclass
class StepDiagnostics:
    n: int
    t: float
    cg_iters: int
    cg_residual: float
    gamma_min: float
    gamma_max: float
    gamma_out_of_range: int


@dataclass
class StepperState:
    n: int
    phi_prev: FEFunction
    phi_prev2: FEFunction | None
    mat_first: sp.csr_matrix
    mat_two_step: sp.csr_matrix
    mass_matrix: sp.csr_matrix
    stiffness: sp.csr_matrix
    hyp_dt_violated: bool = False


@dataclass
class Trajectory:
    dt: float
    times: list[float]
    snapshots: list[np.ndarray] | None
    integrals: list[float]
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    hyp_dt_violated: bool = False
    variant: Variant = Variant.MASS_PRESERVING

    @property
    def num_steps(self) -> int:
        return len(self.times) - 1

    @property
    def gamma_warnings(self) -> int:
        return sum(1 for d in self.diagnostics if d.gamma_out_of_range)

    @property
    def cg_iterations(self) -> list[int]:
        return [d.cg_iters for d in self.diagnostics]


def velocity_w1inf(problem: ProblemData, space: FESpace) -> float:
    u = problem.velocity
    if u.w1inf_seminorm is not None:
        return float(u.w1inf_seminorm)
    pts = space.dof_points
    return max(float(np.abs(u.gradient(pts, t)).max(initial=0.0)) for t in (0.0, 0.5 * problem.T, problem.T))


def _check_spd_structure(A: sp.csr_matrix, name: str) -> None:
    if (A != A.T).nnz:
        raise RuntimeError(f"{name} is not symmetric; assembly is broken")
    if np.any(A.diagonal() <= 0):
        raise RuntimeError(f"{name} has a non-positive diagonal; assembly is broken")


def initialize(problem: ProblemData, space: FESpace, config: SchemeConfig) -> StepperState:
    phi0 = interpolate(space, problem.phi0)
    M = space.mass_matrix
    K = space.stiffness_matrix
    dt, nu = config.dt, problem.nu
    mat_first = (M / dt + nu * K).tocsr()
    mat_two = (1.5 / dt * M + nu * K).tocsr()
    for A, name in ((mat_first, "first-step matrix"), (mat_two, "two-step matrix")):
        A.sort_indices()
        _check_spd_structure(A, name)

    violated = dt * velocity_w1inf(problem, space) > HYP_DT_BOUND
    if violated:
        warnings.warn(
            f"dt * |u|_W1inf = {dt * velocity_w1inf(problem, space):.4g} > 1/8",
            TimeStepWarning,
            stacklevel=2,
        )
    return StepperState(0, phi0, None, mat_first, mat_two, M, K, violated)


def characteristic_rhs(space: FESpace, problem: ProblemData, t: float, dt: float,
                       prev: FEFunction, prev2: FEFunction | None, weighted: bool = True):
    """Integrals ``(prev(X1) gamma1, psi_i)`` and, if ``prev2`` is given,
    ``(prev2(X2) gamma2, psi_i)`` over all cells with the cell rule.

    Returns ``(r1, r2, (gamma_min, gamma_max, out_of_range))``.
    """
    mesh = space.mesh
    d = mesh.dim
    rule = space.rule
    u = problem.velocity
    perms, stored, lookup = mesh._tables
    lower = np.asarray(mesh.domain.lower, dtype=float)
    spacing = np.ascontiguousarray(mesh.spacing, dtype=float)
    dets = np.abs(mesh.jacobian_dets)
    test_basis = np.ascontiguousarray(space.test_basis)
    cell_dofs = space.cell_dofs
    r1 = np.zeros(space.dof_count)
    r2 = np.zeros(space.dof_count) if prev2 is not None else None
    gmin, gmax, bad = np.inf, -np.inf, 0
    lo, hi = JACOBIAN_RANGE

    def accumulate(out, fun, feet, scale, blk):
        kernels.composed_accumulate(
            out, np.ascontiguousarray(feet), np.ascontiguousarray(scale), cell_dofs[blk], test_basis,
            fun.coeffs, cell_dofs, space.degree, lower, spacing, mesh.division, perms, stored, lookup,
        )

    for blk in space.chunks():
        x = mesh.physical_points(rule.points, blk)
        nb, nq = x.shape[:2]
        flat = x.reshape(-1, d)
        vel = np.asarray(u.value(flat, t)).reshape(nb, nq, d)
        base = dets[blk, None] * rule.weights[None, :]
        grad = np.asarray(u.gradient(flat, t)) if weighted else None
        for mult, fun, out in ((1, prev, r1), (2, prev2, r2)):
            if fun is None:
                continue
            step = mult * dt
            feet = x - step * vel
            if weighted:
                gamma = det_identity_minus(step, grad).reshape(nb, nq)
                gmin = min(gmin, float(gamma.min()))
                gmax = max(gmax, float(gamma.max()))
                bad += int(np.count_nonzero((gamma < lo) | (gamma > hi)))
                scale = base * gamma
            else:
                scale = base
            accumulate(out, fun, feet, scale, blk)
    if not weighted:
        gmin = gmax = float("nan")
    return r1, r2, (gmin, gmax, bad)


def step(state: StepperState, problem: ProblemData, space: FESpace, config: SchemeConfig,
         ) -> tuple[FEFunction, StepDiagnostics]:
    """Advance one step; returns the new solution and the step diagnostics.

    The state is rotated in place.
    """
    n = state.n + 1
    dt = config.dt
    t = n * dt
    variant = config.variant
    two = variant.two_step and n >= 2
    r1, r2, (gmin, gmax, bad) = characteristic_rhs(
        space, problem, t, dt, state.phi_prev, state.phi_prev2 if two else None, variant.weighted
    )
    if two:
        A = state.mat_two_step
        rhs = (4.0 * r1 - r2) / (2.0 * dt)
    else:
        A = state.mat_first
        rhs = r1 / dt
    if problem.f is not None or problem.g is not None:
        rhs = rhs + space.assemble_load(problem.f, problem.g, t)
    if bad:
        warnings.warn(
            f"step {n}: {bad} Jacobian value(s) outside [1/2, 3/2] (range {gmin:.4g}..{gmax:.4g})",
            JacobianRangeWarning,
            stacklevel=2,
        )
    try:
        res = cg_solve(A, rhs, tol=config.cg_tol, max_iter=config.cg_max_iter,
                       precond=config.precond, x0=state.phi_prev.coeffs)
    except ConvergenceError as exc:
        raise ConvergenceError(f"step {n} (t={t:.6g}): {exc}", exc.residual, exc.iters) from exc
    x, residual = res.x, res.residual
    if config.mass_correction:
        x, residual = _mass_consistent(A, rhs, x, space.dof_count)
    new = FEFunction(space, x)
    state.phi_prev2 = state.phi_prev
    state.phi_prev = new
    state.n = n
    return new, StepDiagnostics(n, t, res.iters, residual, gmin, gmax, bad)


def _mass_consistent(A: sp.csr_matrix, b: np.ndarray, x: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """Shift ``x`` by a constant so that ``1^T (b - A x) = 0``.

    Summing the rows of the discrete equations gives the mass balance, so
    this makes the balance hold to round-off regardless of the CG tolerance.
    """
    ones = np.ones(n)
    col = A @ ones
    x = x + float(ones @ (b - A @ x)) / float(ones @ col)
    bnorm = float(np.linalg.norm(b))
    return x, float(np.linalg.norm(b - A @ x)) / bnorm if bnorm else 0.0


def run(problem: ProblemData, space: FESpace, config: SchemeConfig, keep_snapshots: bool = True,
        on_step: Callable[[int, float, np.ndarray], None] | None = None) -> Trajectory:
    """Integrate from t=0 to floor(T/dt)*dt.

    ``on_step(n, t, coeffs)`` is called for n = 0..N_T, which lets callers
    accumulate norms without storing the trajectory.
    """
    state = initialize(problem, space, config)
    n_steps = num_steps(problem.T, config.dt)
    phi0 = state.phi_prev.coeffs
    traj = Trajectory(
        dt=config.dt,
        times=[0.0],
        snapshots=[phi0.copy()] if keep_snapshots else None,
        integrals=[float(space.mass_row_sums @ phi0)],
        hyp_dt_violated=state.hyp_dt_violated,
        variant=config.variant,
    )
    if on_step is not None:
        on_step(0, 0.0, phi0)
    for _ in range(n_steps):
        new, diag = step(state, problem, space, config)
        traj.times.append(diag.t)
        traj.integrals.append(float(space.mass_row_sums @ new.coeffs))
        traj.diagnostics.append(diag)
        if keep_snapshots:
            traj.snapshots.append(new.coeffs.copy())
        if on_step is not None:
            on_step(diag.n, diag.t, new.coeffs)
    return traj
