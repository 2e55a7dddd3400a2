"""Compiled vs pure-Python kernels.

Times point location, function evaluation and the characteristic right-hand
side (the dominant cost of every time step) with both backends, checks that
they agree, and prints a table.  Run with ``python3 benchmarks/bench_kernels.py``.
"""
from __future__ import annotations

import argparse
import time
from contextlib import contextmanager

import numpy as np

from mplg import _kernels_py, kernels
from mplg.fem import FESpace, interpolate
from mplg.mesh import build_box_mesh
from mplg.problems import travelling_wave
from mplg.scheme import characteristic_rhs

try:
    from mplg import _ckernels
except ImportError:  # extension not built
    _ckernels = None

NAMES = ("locate", "evaluate", "composed_accumulate")


@contextmanager
def backend(module):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(module, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(quick: bool):
    sizes = [(1, 4096, 1), (2, 64, 1), (2, 64, 2), (3, 16, 1)]
    if not quick:
        sizes += [(2, 256, 1), (3, 32, 1)]
    for dim, N, degree in sizes:
        pb = travelling_wave(dim)
        V = FESpace(build_box_mesh(dim, N), degree)
        phi = interpolate(V, pb.phi0)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1.1, 1.1, (200_000, dim))

        def locate_eval(V=V, phi=phi, pts=pts):
            cells, bary = V.mesh.locate_points(pts)
            return phi(pts), cells

        def rhs(V=V, pb=pb, phi=phi):
            return characteristic_rhs(V, pb, 0.1, 0.05, phi, phi)[:2]

        yield f"d={dim} N={N} P{degree}", locate_eval, rhs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small problems only")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled extension mplg._ckernels is not built; run `pip install -e . --no-build-isolation`")

    print(f"{'case':<16}{'kernel':<22}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max diff':>12}")
    for label, locate_eval, rhs in cases(args.quick):
        for kname, fn in (("locate+evaluate", locate_eval), ("characteristic rhs", rhs)):
            with backend(_kernels_py):
                tp, ref = best_of(fn, args.repeat)
            with backend(_ckernels):
                tc, got = best_of(fn, args.repeat)
            diff = max(float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).max())
                       for a, b in zip(ref, got))
            print(f"{label:<16}{kname:<22}{tp:>12.4f}{tc:>14.4f}{tp / tc:>9.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
