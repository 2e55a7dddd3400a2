"""Error norms, EOCs, discrete mass metrics and checks of the discrete Gronwall inequality.

Space-time norms of a step sequence ``rho^1..rho^NT`` are

    l-infinity:  max_n ||rho^n||
    l-two:       sqrt(dt * sum_n ||rho^n||**2)

with ``||.||`` the L2 norm (``c^T M c``) or the H1 seminorm (``c^T K c``).
Relative errors divide by the same norm of the interpolated exact solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .characteristics import VelocityField, det_identity_minus
from .fem import FEFunction, FESpace, interpolate
from .mesh import Mesh
from .problems import ProblemData
from .quadrature import simplex_rule
from .scheme import Trajectory, Variant

EOC_UNDEFINED = None


@dataclass(frozen=True)
class ErrorReport:
    e_linf_l2: float
    e_l2_h10: float
    e_linf_h10: float
    e_h1_l2: float | None = None

    def as_dict(self) -> dict:
        return {
            "E_linf_L2": self.e_linf_l2,
            "E_l2_H10": self.e_l2_h10,
            "E_linf_H10": self.e_linf_h10,
            "E_H1_L2": self.e_h1_l2,
        }


@dataclass(frozen=True)
class MassReport:
    m_h: np.ndarray
    e_mass: float
    e_mass_prime: float
    e_mass_double_prime: float

    def as_dict(self) -> dict:
        return {
            "E_mass": self.e_mass,
            "E_mass_prime": self.e_mass_prime,
            "E_mass_double_prime": self.e_mass_double_prime,
        }


def _ratio(num: float, den: float) -> float:
    num, den = float(num), float(den)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def bdf_apply(seq: Sequence, n: int, dt: float):
    """Backward difference at step ``n``: first order for n == 1, BDF2 after.

    ``seq`` holds FEFunctions or plain arrays indexed by step number; the
    result has the same kind as the entries.
    """
    if n < 1:
        raise ValueError("backward difference needs n >= 1")
    if len(seq) <= n:
        raise ValueError(f"history too short: step {n} requested from {len(seq)} entries")
    vals = [s.coeffs if isinstance(s, FEFunction) else np.asarray(s, dtype=float) for s in seq[max(0, n - 2): n + 1]]
    if n == 1:
        out = (vals[-1] - vals[-2]) / dt
    else:
        out = (3.0 * vals[2] - 4.0 * vals[1] + vals[0]) / (2.0 * dt)
    first = seq[n]
    return FEFunction(first.space, out) if isinstance(first, FEFunction) else out


class RunMonitor:
    """Streams the error and mass metrics of a run step by step.

    Pass an instance as ``on_step`` to :func:`mplg.scheme.run` so that no
    snapshots have to be kept; :func:`error_norms` and :func:`mass_metrics`
    replay stored trajectories through the same code.
    """

    def __init__(self, space: FESpace, problem: ProblemData, dt: float,
                 variant: Variant | str = Variant.MASS_PRESERVING):
        self.space = space
        self.problem = problem
        self.dt = dt
        self.two_step = Variant(variant).two_step
        self.M = space.mass_matrix
        self.K = space.stiffness_matrix
        self._ones = space.mass_row_sums
        self.has_exact = problem.exact is not None
        self.integrals: list[float] = []
        self.exact_integrals: list[float] = []
        self.errors_l2: list[float] = []
        self.errors_h1: list[float] = []
        self.norms_l2: list[float] = []
        self.norms_h1: list[float] = []
        self.dt_errors: list[float] = []
        self.dt_norms: list[float] = []
        self._history: list[np.ndarray] = []
        self.sources: list[float] = []

    def _qform(self, A, v) -> float:
        return float(max(v @ (A @ v), 0.0))

    def __call__(self, n: int, t: float, coeffs: np.ndarray) -> None:
        c = np.array(coeffs, dtype=float)
        self.integrals.append(float(self._ones @ c))
        self._history = (self._history + [c])[-3:]
        pb = self.problem
        if n >= 1 and (pb.f is not None or pb.g is not None):
            self.sources.append(float(self.space.assemble_load(pb.f, pb.g, t).sum()))
        elif n >= 1:
            self.sources.append(0.0)
        if not self.has_exact:
            return
        ex = interpolate(self.space, lambda x: pb.exact(x, t)).coeffs
        self.exact_integrals.append(float(self._ones @ ex))
        if n == 0:
            return
        e = c - ex
        self.errors_l2.append(self._qform(self.M, e))
        self.errors_h1.append(self._qform(self.K, e))
        self.norms_l2.append(self._qform(self.M, ex))
        self.norms_h1.append(self._qform(self.K, ex))
        if pb.exact_dt is not None:
            hist = self._history if n >= 2 else self._history[-2:]
            d = bdf_apply(hist, len(hist) - 1, self.dt)
            ex_dt = interpolate(self.space, lambda x: pb.exact_dt(x, t)).coeffs
            self.dt_errors.append(self._qform(self.M, d - ex_dt))
            self.dt_norms.append(self._qform(self.M, ex_dt))

    def error_report(self) -> ErrorReport:
        if not self.has_exact:
            raise ValueError("error norms need an exact solution")
        if not self.errors_l2:
            raise ValueError("no time steps recorded")
        linf = lambda sq: math.sqrt(max(sq))
        l2 = lambda sq: math.sqrt(self.dt * sum(sq))
        e_h1_l2 = None
        if self.dt_errors:
            e_h1_l2 = _ratio(l2(self.dt_errors), l2(self.dt_norms))
        return ErrorReport(
            e_linf_l2=_ratio(linf(self.errors_l2), linf(self.norms_l2)),
            e_l2_h10=_ratio(l2(self.errors_h1), l2(self.norms_h1)),
            e_linf_h10=_ratio(linf(self.errors_h1), linf(self.norms_h1)),
            e_h1_l2=e_h1_l2,
        )

    def discrete_mass(self) -> np.ndarray:
        ints = np.asarray(self.integrals)
        m = ints.copy()
        if self.two_step and len(ints) > 2:
            m[2:] = 1.5 * ints[2:] - 0.5 * ints[1:-1]
        return m

    def mass_report(self) -> MassReport:
        ints = np.asarray(self.integrals)
        e_prime = _ratio(abs(ints[-1] - ints[0]), abs(ints[0]))
        if self.has_exact:
            ex = np.asarray(self.exact_integrals)
            e_mass = _ratio(abs(ints[-1] - ex[-1]), abs(ex[-1]))
            num = self.dt * np.abs(ints[1:] - ex[1:]).sum()
            den = self.dt * np.abs(ex[1:]).sum()
            e_dprime = _ratio(num, den)
        else:
            e_mass = e_dprime = math.nan
        return MassReport(self.discrete_mass(), e_mass, e_prime, e_dprime)

    def balance_residual(self) -> np.ndarray:
        """Discrete mass minus initial mass minus accumulated sources.

        For two-step variants the first (one-step) step enters the weighted
        mass ``1.5 int phi^1 - 0.5 int phi^0`` with weight 3/2, so from n = 2
        on the expected value carries an extra ``dt/2`` times the first source.
        """
        m = self.discrete_mass()
        src = np.concatenate([[0.0], np.cumsum(self.sources)])
        expected = self.dt * src
        if self.two_step and len(self.sources):
            expected[2:] += 0.5 * self.dt * self.sources[0]
        return m - m[0] - expected


def _replay(traj: Trajectory, problem: ProblemData, space: FESpace) -> RunMonitor:
    if traj.snapshots is None:
        raise ValueError("trajectory has no stored snapshots; use RunMonitor while running")
    mon = RunMonitor(space, problem, traj.dt, traj.variant)
    for n, (t, c) in enumerate(zip(traj.times, traj.snapshots)):
        mon(n, t, c)
    return mon


def error_norms(traj: Trajectory, problem: ProblemData, space: FESpace) -> ErrorReport:
    if problem.exact is None:
        raise ValueError("error norms need an exact solution")
    return _replay(traj, problem, space).error_report()


def _step_integrals(traj: Trajectory, space: FESpace) -> list[float]:
    if traj.snapshots is None:
        return list(traj.integrals)
    ones = space.mass_row_sums
    return [float(ones @ c) for c in traj.snapshots]


def mass_metrics(traj: Trajectory, problem: ProblemData, space: FESpace,
                 exact_interp: Sequence[FEFunction] | None = None) -> MassReport:
    """Discrete masses and the three relative mass errors.

    ``exact_interp`` overrides the interpolated exact solution per step.
    """
    mon = RunMonitor(space, problem, traj.dt, traj.variant)
    mon.integrals = _step_integrals(traj, space)
    ones = space.mass_row_sums
    if exact_interp is not None:
        mon.has_exact = True
        mon.exact_integrals = [float(ones @ getattr(e, "coeffs", e)) for e in exact_interp]
    elif problem.exact is not None:
        mon.exact_integrals = [
            float(ones @ interpolate(space, lambda x, t=t: problem.exact(x, t)).coeffs) for t in traj.times
        ]
    return mon.mass_report()


def mass_balance_residual(traj: Trajectory, problem: ProblemData, space: FESpace) -> np.ndarray:
    """``M_h^n - M_h^0 - dt * sum_{i<=n} S^i`` for every step, ``S = int f + int g``,
    including the start-up term of two-step variants (see ``RunMonitor.balance_residual``)."""
    mon = RunMonitor(space, problem, traj.dt, traj.variant)
    mon.integrals = _step_integrals(traj, space)
    if problem.f is not None or problem.g is not None:
        mon.sources = [float(space.assemble_load(problem.f, problem.g, t).sum()) for t in traj.times[1:]]
    else:
        mon.sources = [0.0] * traj.num_steps
    return mon.balance_residual()


# ---------------------------------------------------------------- EOC tables

ERROR_COLUMNS = ("E_linf_L2", "E_l2_H10", "E_linf_H10")


@dataclass
class ConvergenceRow:
    N: int
    dt: float
    errors: ErrorReport
    e_mass: float
    eocs: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return 2.0 / self.N


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow] = field(default_factory=list)
    step: str = "dt"


def eoc_value(e1: float, e2: float, s1: float, s2: float) -> float | None:
    if e1 <= 0.0 or e2 <= 0.0 or s1 == s2:
        return EOC_UNDEFINED
    return math.log(e2 / e1) / math.log(s2 / s1)


def eoc(table: ConvergenceTable, step: str = "auto") -> ConvergenceTable:
    """Fill the EOC columns from consecutive rows.

    ``step`` picks the refinement parameter: ``"dt"``, ``"h"`` or ``"auto"``
    (``dt`` unless it is the same in every row).
    """
    rows = table.rows
    if step == "auto":
        step = "h" if len({r.dt for r in rows}) == 1 and len(rows) > 1 else "dt"
    if step not in ("dt", "h"):
        raise ValueError(f"unknown refinement parameter {step!r}")
    key = (lambda r: r.dt) if step == "dt" else (lambda r: r.h)
    if rows:
        rows[0].eocs = {}
    for prev, cur in zip(rows, rows[1:]):
        e_prev, e_cur = prev.errors.as_dict(), cur.errors.as_dict()
        cur.eocs = {c: eoc_value(e_prev[c], e_cur[c], key(prev), key(cur)) for c in ERROR_COLUMNS}
    table.step = step
    return table


# ------------------------------------------------------------ truncation probe

def truncation_probe(u: VelocityField, phi: Callable, rate: Callable, dt_list: Sequence[float],
                     mesh: Mesh, t: float = 0.4, order: int = 2) -> list[tuple[float, float]]:
    """L2 norm at time ``t`` of the discrete material derivative of an exact field
    minus ``rate = dphi/dt + div(u phi)``, for each ``dt``.

    ``order=2`` applies the two-step operator, ``order=1`` the one-step one.
    The exact field is evaluated at the upwind points, so only the time
    discretisation is measured.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    rule = simplex_rule(mesh.dim)
    dets = np.abs(mesh.jacobian_dets)
    d = mesh.dim
    x = mesh.physical_points(rule.points, slice(None)).reshape(-1, d)
    w = (dets[:, None] * rule.weights[None, :]).ravel()
    vel = np.asarray(u.value(x, t))
    grad = np.asarray(u.gradient(x, t))
    target = rate(x, t)
    now = phi(x, t)
    out = []
    for dt in dt_list:
        back1 = phi(x - dt * vel, t - dt) * det_identity_minus(dt, grad)
        if order == 1:
            approx = (now - back1) / dt
        else:
            back2 = phi(x - 2 * dt * vel, t - 2 * dt) * det_identity_minus(2 * dt, grad)
            approx = (3 * now - 4 * back1 + back2) / (2 * dt)
        res = approx - target
        out.append((float(dt), float(np.sqrt(w @ res**2))))
    return out


def fitted_slope(pairs: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    dts, errs = np.array(pairs, dtype=float).T
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


# ------------------------------------------------------------- Gronwall check

@dataclass(frozen=True)
class GronwallResult:
    trials: int
    violations: int
    root_property_violations: int
    max_ratio: float

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.root_property_violations == 0


def _roots(a0, a1, a2, dt):
    A = 1.5 - a0 * dt
    B = 2.0 + a1 * dt
    C = 0.5 - a2 * dt
    with np.errstate(invalid="ignore"):
        disc = np.sqrt(B * B - 4.0 * A * C)
    return (B - disc) / (2.0 * A), (B + disc) / (2.0 * A)


def root_property_failures(a0, a1, a2, dt, n_max: int = 200, rtol: float = 1e-12) -> np.ndarray:
    """Per trial, the number of violated root inequalities for the characteristic polynomial."""
    a0, a1, a2, dt = (np.asarray(v, dtype=float) for v in (a0, a1, a2, dt))
    p, q = _roots(a0, a1, a2, dt)
    lam = 2.0 / 3.0
    slack = rtol * (1.0 + np.abs(q))
    fails = (
        (~((np.abs(p) < 1.0) & (q >= 1.0 - slack))).astype(int)
        + (2 * lam > p + q + slack)
        + (p * q > lam + slack)
        + (q - p < lam - slack)
    )
    astar = a0 + a1 + a2
    n = np.arange(1, n_max + 1)[:, None]
    lhs = q[None] ** n - p[None] ** n
    rhs = np.exp(2.0 * astar[None] * n * dt[None]) + 1.0
    fails = fails + np.any(lhs > rhs * (1.0 + rtol), axis=0)
    return fails


def gronwall_check(trials: int = 10_000, seed: int = 0, n_max: int = 200) -> GronwallResult:
    """Sample two-step recurrences that meet the Gronwall hypothesis with equality
    and count violations of the concluded bound and of the root inequalities.

    Every trial draws from its own stream spawned from ``seed``, so results do
    not depend on how many trials run alongside.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    streams = np.random.SeedSequence(seed).spawn(trials)
    a = np.empty((trials, 3))
    dt = np.empty(trials)
    init = np.empty((trials, 3))
    ys = np.empty((trials, n_max + 1))
    zs = np.empty((trials, n_max + 1))
    bs = np.empty((trials, n_max + 1))
    for k, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        mode = rng.integers(4)
        if mode == 0:
            coef = np.zeros(3)
        else:
            coef = rng.exponential(1.0, 3) * rng.choice([0.1, 1.0, 5.0])
            coef[1:] = np.sort(coef[1:])[::-1]
        a[k] = coef
        cap = min(3.0 / (4.0 * coef[0]) if coef[0] > 0 else 1.0, 1.0)
        astar = coef.sum()
        if astar > 0:
            # keep exp(2 a* n dt) finite over the horizon
            cap = min(cap, 150.0 / (astar * n_max))
        dt[k] = cap if rng.random() < 0.2 else cap * rng.uniform(1e-3, 1.0)
        init[k] = rng.exponential(1.0, 3) * (rng.random(3) > 0.2)
        sparse = lambda: rng.exponential(1.0, n_max + 1) * (rng.random(n_max + 1) > 0.3)
        ys[k], zs[k], bs[k] = sparse(), sparse(), sparse()
    if trials >= 1:
        a[0], init[0] = 0.0, 0.0
        ys[0] = zs[0] = bs[0] = 0.0

    a0, a1, a2 = a.T
    denom = 1.5 - a0 * dt
    x = np.zeros((trials, n_max + 1))
    y = np.zeros((trials, n_max + 1))
    z = np.zeros((trials, n_max + 1))
    b = np.zeros((trials, n_max + 1))
    x[:, 0], x[:, 1], y[:, 1] = init.T
    for n in range(2, n_max + 1):
        y[:, n], z[:, n], b[:, n] = ys[:, n], zs[:, n], bs[:, n]
        base = 2 * x[:, n - 1] - 0.5 * x[:, n - 2] + y[:, n - 1] + dt * (a1 * x[:, n - 1] + a2 * x[:, n - 2])
        num = base - y[:, n] - dt * z[:, n] + dt * b[:, n]
        neg = num < 0
        # lower y_n and z_n first, then raise b_n just enough
        y[neg, n] = 0.0
        z[neg, n] = 0.0
        num = base - y[:, n] - dt * z[:, n] + dt * b[:, n]
        neg = num < 0
        b[neg, n] += -num[neg] / dt[neg]
        num = np.where(neg, 0.0, num)
        x[:, n] = num / denom

    astar = a.sum(axis=1)
    n = np.arange(n_max + 1)
    lhs = x + (2.0 / 3.0) * y + (2.0 / 3.0) * dt[:, None] * np.cumsum(z, axis=1)
    rhs = (np.exp(2.0 * astar[:, None] * n[None] * dt[:, None]) + 1.0) * (
        x[:, :1] + 1.5 * x[:, 1:2] + y[:, 1:2] + dt[:, None] * np.cumsum(b, axis=1)
    )
    tail = slice(2, None)
    bad = lhs[:, tail] > rhs[:, tail] * (1.0 + 1e-12) + 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs[:, tail] > 0, lhs[:, tail] / rhs[:, tail], 0.0)
    violations = int(np.count_nonzero(np.any(bad, axis=1)))
    roots = int(np.count_nonzero(root_property_failures(a0, a1, a2, dt, n_max)))
    return GronwallResult(trials, violations, roots, float(np.nanmax(ratio)))
