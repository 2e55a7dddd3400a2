"""Command-line experiment runner.

    mplg converge --dim 1 --coupling 4,1 --N 32,64,128,256,512
    mplg single --dim 2 --N 64 --export-solution sol.csv
    mplg verify --suite all
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import ConvergenceRow, ConvergenceTable, RunMonitor
from .characteristics import JACOBIAN_RANGE, det_identity_minus, divergence_and_deltas
from .fem import FESpace
from .mesh import build_box_mesh
from .problems import ProblemData, pure_diffusion, travelling_wave
from .quadrature import monomial_integral, simplex_rule
from .scheme import SchemeConfig, Variant, num_steps, run

CSV_HEADER = ["N", "dt", "E_linf_L2", "EOC", "E_l2_H10", "EOC", "E_linf_H10", "EOC", "E_mass"]
MAX_3D_N = 64
UNDEFINED = "undef"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dim: int = 1
    degree: int = 1
    variant: Variant = Variant.MASS_PRESERVING
    nu: float = 1e-2
    T: float = 0.5
    coupling: tuple[float, float] | None = None
    dt: list[float] | None = None
    N_list: tuple[int, ...] = (32,)
    problem: str = "wave"
    fmt: str = "csv"
    out: Path | None = None
    seed: int = 0
    allow_large_3d: bool = False

    def validate(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ConfigError("--dim must be 1, 2 or 3")
        if self.degree not in (1, 2):
            raise ConfigError("--degree must be 1 or 2")
        if not 0 < self.nu <= 1:
            raise ConfigError("--nu must lie in (0, 1]")
        if self.T <= 0:
            raise ConfigError("--T must be positive")
        if not self.N_list or any(n < 1 for n in self.N_list):
            raise ConfigError("--N needs positive integers")
        if any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ConfigError("--N must be strictly increasing")
        if self.coupling is not None and self.dt is not None:
            raise ConfigError("give either --coupling or --dt, not both")
        if self.coupling is not None and (self.coupling[0] <= 0 or self.coupling[1] <= 0):
            raise ConfigError("--coupling needs c > 0 and p > 0")
        if self.dt is not None:
            if any(d <= 0 for d in self.dt):
                raise ConfigError("--dt must be positive")
            if len(self.dt) > 1 and len(self.N_list) > 1 and len(self.dt) != len(self.N_list):
                raise ConfigError("a --dt list needs a single N or one N per time step")
        if self.dim == 3 and max(self.N_list) > MAX_3D_N and not self.allow_large_3d:
            raise ConfigError(f"3D runs above N={MAX_3D_N} need --allow-large-3d")
        too_long = [(N, dt) for N, dt in self.runs() if num_steps(self.T, dt) < 1]
        if too_long:
            N, dt = too_long[0]
            raise ConfigError(f"time step {dt:.6g} (N={N}) exceeds T={self.T:g}; no step would be taken")

    def runs(self) -> list[tuple[int, float]]:
        """(N, dt) pairs in output order."""
        if self.dt is None:
            c, p = self.coupling if self.coupling is not None else (4.0, 1.0)
            return [(N, c * (2.0 / N) ** p) for N in self.N_list]
        if len(self.dt) == 1:
            return [(N, self.dt[0]) for N in self.N_list]
        if len(self.N_list) == 1:
            return [(self.N_list[0], d) for d in self.dt]
        return list(zip(self.N_list, self.dt))

    def problem_data(self) -> ProblemData:
        if self.problem == "wave":
            return travelling_wave(self.dim, nu=self.nu, T=self.T)
        bump = lambda x: np.prod(np.cos(0.5 * np.pi * x) ** 2, axis=-1)
        return pure_diffusion(self.dim, bump, nu=self.nu, T=self.T)


def run_case(cfg: ExperimentConfig, N: int, dt: float):
    problem = cfg.problem_data()
    space = FESpace(build_box_mesh(cfg.dim, N), cfg.degree)
    mon = RunMonitor(space, problem, dt, cfg.variant)
    traj = run(problem, space, SchemeConfig(dt, cfg.variant), keep_snapshots=False, on_step=mon)
    return space, traj, mon


# ------------------------------------------------------------------ converge

def converge(cfg: ExperimentConfig) -> ConvergenceTable:
    table = ConvergenceTable()
    for N, dt in cfg.runs():
        _, _, mon = run_case(cfg, N, dt)
        table.rows.append(ConvergenceRow(N, dt, mon.error_report(), mon.mass_report().e_mass))
    step = "auto"
    if cfg.dt is not None and len(cfg.dt) > 1 and len(cfg.N_list) == 1:
        step = "dt"
    return analysis.eoc(table, step)


def _eoc_cell(row: ConvergenceRow, col: str, full: bool) -> str:
    if col not in row.eocs:
        return ""
    v = row.eocs[col]
    if v is None:
        return UNDEFINED
    return repr(v) if full else f"{v:.2f}"


def table_rows(table: ConvergenceTable, full: bool = False) -> list[list[str]]:
    num = repr if full else (lambda v: f"{v:.2e}")
    out = []
    for r in table.rows:
        e = r.errors.as_dict()
        out.append([
            str(r.N),
            repr(r.dt) if full else f"{r.dt:.6g}",
            num(e["E_linf_L2"]), _eoc_cell(r, "E_linf_L2", full),
            num(e["E_l2_H10"]), _eoc_cell(r, "E_l2_H10", full),
            num(e["E_linf_H10"]), _eoc_cell(r, "E_linf_H10", full),
            num(r.e_mass),
        ])
    return out


def render_csv(table: ConvergenceTable, full: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(table_rows(table, full))
    return buf.getvalue()


def render_text(table: ConvergenceTable) -> str:
    header = list(CSV_HEADER)
    if table.step == "h":
        header = [h + "_h" if h == "EOC" else h for h in header]
    rows = [header] + table_rows(table)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in rows) + "\n"


def full_path(path: Path) -> Path:
    return path.with_name(path.stem + "_full" + (path.suffix or ".csv"))


def cmd_converge(cfg: ExperimentConfig) -> int:
    table = converge(cfg)
    text = render_csv(table) if cfg.fmt == "csv" else render_text(table)
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        cfg.out.write_text(text)
        full_path(cfg.out).write_text(render_csv(table, full=True))
    return 0


# -------------------------------------------------------------------- single

def export_solution(path: Path, space: FESpace, coeffs: np.ndarray) -> None:
    pts = space.mesh.vertices
    vals = coeffs[space.vertex_dofs]
    names = ["x", "y", "z"][: space.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["value"])
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def single_summary(cfg: ExperimentConfig, export: Path | None = None) -> dict:
    (N, dt), = cfg.runs()[:1]
    space, traj, mon = run_case(cfg, N, dt)
    if export is not None:
        export_solution(export, space, mon._history[-1])
    mass = mon.mass_report()
    diags = traj.diagnostics
    finite = [d for d in diags if not math.isnan(d.gamma_min)]
    summary = {
        "N": N,
        "dt": dt,
        "steps": traj.num_steps,
        "variant": cfg.variant.value,
        "dt_hypothesis_violated": traj.hyp_dt_violated,
        "mass": {k: v for k, v in mass.as_dict().items()},
        "max_balance_residual": float(np.abs(mon.balance_residual()).max()),
        "jacobian": {
            "min": min((d.gamma_min for d in finite), default=None),
            "max": max((d.gamma_max for d in finite), default=None),
            "steps_out_of_range": traj.gamma_warnings,
        },
        "cg": {
            "total_iterations": int(sum(traj.cg_iterations)),
            "max_iterations": int(max(traj.cg_iterations, default=0)),
            "max_residual": float(max((d.cg_residual for d in diags), default=0.0)),
        },
    }
    if mon.has_exact:
        summary["errors"] = mon.error_report().as_dict()
    return summary


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    return obj


def cmd_single(cfg: ExperimentConfig, export: Path | None) -> int:
    if len(cfg.runs()) != 1:
        raise ConfigError("single runs take one N and one dt")
    summary = _clean(single_summary(cfg, export))
    if cfg.fmt == "csv":
        flat = []

        def walk(prefix, obj):
            for k, v in obj.items():
                if isinstance(v, dict):
                    walk(prefix + k + ".", v)
                else:
                    flat.append((prefix + k, v))

        walk("", summary)
        text = "key,value\n" + "".join(f"{k},{'' if v is None else v}\n" for k, v in flat)
    else:
        text = json.dumps(summary, indent=2) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        cfg.out.write_text(text)
    return 0


# -------------------------------------------------------------------- verify

def _exponents(dim: int, degree: int):
    for alpha in itertools.product(range(degree + 1), repeat=dim):
        if sum(alpha) <= degree:
            yield alpha


def verify_quadrature(seed: int) -> dict:
    checks, worst = 0, 0.0
    for dim, degree in ((1, 9), (2, 5), (3, 5)):
        rule = simplex_rule(dim)
        for alpha in _exponents(dim + 1, degree):
            approx = float(rule.weights @ np.prod(rule.points ** np.array(alpha), axis=1))
            worst = max(worst, abs(approx - monomial_integral(alpha)))
            checks += 1
    return {"passed": worst <= 1e-13, "checks": checks, "max_error": worst}


def verify_jacobian(seed: int, samples: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    worst, implication_failures = 0.0, 0
    lo, hi = JACOBIAN_RANGE
    for dim in (1, 2, 3):
        grad = rng.uniform(-1.0, 1.0, (samples, dim, dim))
        dt = rng.uniform(0.0, 1.0, samples)
        direct = det_identity_minus(dt[:, None, None], grad)
        div, d1, d2 = divergence_and_deltas(grad)
        expanded = 1.0 - dt * div + dt**2 * d1 + dt**3 * d2
        worst = max(worst, float(np.abs(direct - expanded).max()))
        # out-of-range Jacobian must come with a violated time-step bound
        step = rng.uniform(0.0, 0.25, samples)
        gamma = det_identity_minus(step[:, None, None], grad)
        bound = step * np.abs(grad).reshape(samples, -1).max(axis=1)
        out = (gamma < lo) | (gamma > hi)
        implication_failures += int(np.count_nonzero(out & (bound <= 0.125)))
    passed = worst <= 1e-13 and implication_failures == 0
    return {"passed": passed, "samples_per_dim": samples, "max_expansion_error": worst,
            "implication_failures": implication_failures}


def verify_gronwall(seed: int, trials: int = 10_000) -> dict:
    r = analysis.gronwall_check(trials, seed)
    return {"passed": r.ok, "trials": r.trials, "violations": r.violations,
            "root_property_violations": r.root_property_violations, "max_ratio": r.max_ratio}


def verify_truncation(seed: int) -> dict:
    pb = travelling_wave(2, nu=0.1)
    mesh = build_box_mesh(2, 32)
    dts = [0.1 * 2.0**-j for j in range(6)]
    slopes = {}
    for order in (1, 2):
        pairs = analysis.truncation_probe(pb.velocity, pb.exact, pb.material_rate, dts, mesh, order=order)
        slopes[order] = analysis.fitted_slope(pairs)
    passed = slopes[2] >= 1.9 and 0.9 <= slopes[1] <= 1.2
    return {"passed": passed, "slope_two_step": slopes[2], "slope_one_step": slopes[1]}


def verify_conservation(seed: int) -> dict:
    worst = 0.0
    for dim, N in ((1, 16), (2, 8), (3, 4)):
        cfg = ExperimentConfig(dim=dim, problem="diffusion", N_list=(N,), dt=[0.05], T=0.5)
        _, _, mon = run_case(cfg, N, 0.05)
        ints = np.asarray(mon.integrals)
        worst = max(worst, float(np.abs(ints - ints[0]).max() / abs(ints[0])))
    return {"passed": worst <= 1e-13, "max_relative_drift": worst}


SUITES = {
    "quadrature": verify_quadrature,
    "jacobian": verify_jacobian,
    "gronwall": verify_gronwall,
    "truncation": verify_truncation,
    "conservation": verify_conservation,
}


def cmd_verify(suite: str, seed: int, out: Path | None) -> int:
    names = list(SUITES) if suite == "all" else [suite]
    report = {name: _clean(SUITES[name](seed)) for name in names}
    ok = all(r["passed"] for r in report.values())
    text = json.dumps({"passed": ok, "suites": report}, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
    return 0 if ok else 1


# ---------------------------------------------------------------------- main

def _int_list(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in s.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {s!r}")


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {s!r}")


def _coupling(s: str) -> tuple[float, float]:
    parts = s.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("coupling is 'c,p' meaning dt = c*h**p")
    try:
        c = float(parts[0])
        p = float(parts[1]) if "/" not in parts[1] else float(parts[1].split("/")[0]) / float(parts[1].split("/")[1])
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad coupling {s!r}")
    return c, p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mplg", description="Lagrange-Galerkin convection-diffusion experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--dim", type=int, default=1, choices=(1, 2, 3))
        p.add_argument("--degree", type=int, default=1, choices=(1, 2))
        p.add_argument("--variant", default="mp2", choices=[v.value for v in Variant])
        p.add_argument("--nu", type=float, default=1e-2)
        p.add_argument("--T", type=float, default=0.5)
        p.add_argument("--coupling", type=_coupling, default=None, metavar="c,p",
                       help="dt = c*h**p with h = 2/N (default 4,1)")
        p.add_argument("--dt", type=_float_list, default=None, help="fixed time step or comma list")
        p.add_argument("--N", type=_int_list, default=(32,), help="comma-separated divisions per axis")
        p.add_argument("--problem", default="wave", choices=("wave", "diffusion"),
                       help="travelling wave with exact solution, or zero-velocity diffusion of a bump")
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--format", dest="fmt", default="csv", choices=("csv", "text"))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--allow-large-3d", action="store_true", help=f"permit 3D runs with N > {MAX_3D_N}")

    common(sub.add_parser("converge", help="convergence table over N or dt"))
    p_single = sub.add_parser("single", help="one run with diagnostics")
    common(p_single)
    p_single.add_argument("--export-solution", type=Path, default=None, help="vertex values as CSV")
    p_verify = sub.add_parser("verify", help="numerical property suites")
    p_verify.add_argument("--suite", default="all", choices=["all"] + list(SUITES))
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--out", type=Path, default=None)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig(
        dim=args.dim, degree=args.degree, variant=Variant(args.variant), nu=args.nu, T=args.T,
        coupling=args.coupling, dt=args.dt, N_list=tuple(args.N), problem=args.problem,
        fmt=args.fmt, out=args.out, seed=args.seed, allow_large_3d=args.allow_large_3d,
    )
    if cfg.problem == "diffusion" and args.command == "converge":
        raise ConfigError("convergence tables need the travelling-wave problem")
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed, args.out)
        cfg = config_from_args(args)
        if args.command == "converge":
            return cmd_converge(cfg)
        return cmd_single(cfg, args.export_solution)
    except ConfigError as exc:
        parser.error(str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
