import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mplg.analysis import (
    ConvergenceRow,
    ConvergenceTable,
    ErrorReport,
    RunMonitor,
    bdf_apply,
    eoc,
    error_norms,
    fitted_slope,
    gronwall_check,
    mass_balance_residual,
    mass_metrics,
    root_property_failures,
    truncation_probe,
)
from mplg.characteristics import VelocityField
from mplg.fem import FESpace, FEFunction, interpolate
from mplg.mesh import build_box_mesh
from mplg.problems import pure_diffusion, travelling_wave
from mplg.scheme import SchemeConfig, Trajectory, run


def test_bdf_constant_linear_quadratic():
    dt = 0.1
    t = np.arange(6) * dt
    const = [np.full(3, 2.0) for _ in t]
    lin = [np.full(3, s) for s in t]
    quad = [np.full(3, s * s) for s in t]
    for n in range(1, 6):
        assert np.allclose(bdf_apply(const, n, dt), 0.0, atol=1e-12)
        assert np.allclose(bdf_apply(lin, n, dt), 1.0, atol=1e-12)
    for n in range(2, 6):
        assert np.allclose(bdf_apply(quad, n, dt), 2 * t[n], atol=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 1.0), st.integers(2, 20))
def test_bdf_exact_on_quadratics(a, b, c, dt, n):
    p = lambda s: a + b * s + c * s * s
    seq = [np.array([p(k * dt)]) for k in range(n + 1)]
    assert bdf_apply(seq, n, dt)[0] == pytest.approx(b + 2 * c * n * dt, abs=1e-12 * (1 + abs(b) + abs(c) / dt))


def test_bdf_on_functions_and_errors():
    V = FESpace(build_box_mesh(1, 4), 1)
    seq = [FEFunction(V, np.full(V.dof_count, float(k))) for k in range(3)]
    out = bdf_apply(seq, 2, 0.5)
    assert isinstance(out, FEFunction) and np.allclose(out.coeffs, 2.0)
    with pytest.raises(ValueError):
        bdf_apply(seq, 0, 0.5)
    with pytest.raises(ValueError):
        bdf_apply(seq, 3, 0.5)


def exact_trajectory(pb, V, dt):
    times = [n * dt for n in range(int(round(pb.T / dt)) + 1)]
    snaps = [interpolate(V, lambda x, t=t: pb.exact(x, t)).coeffs for t in times]
    return Trajectory(dt, times, snaps, [float(V.mass_row_sums @ s) for s in snaps])


def test_errors_vanish_on_interpolated_exact_solution():
    pb = travelling_wave(2)
    V = FESpace(build_box_mesh(2, 8), 1)
    tr = exact_trajectory(pb, V, 0.125)
    rep = error_norms(tr, pb, V)
    assert rep.e_linf_l2 == rep.e_l2_h10 == rep.e_linf_h10 == 0.0
    m = mass_metrics(tr, pb, V)
    assert m.e_mass == 0.0 and m.e_mass_double_prime == 0.0


def test_error_norms_need_exact_solution():
    pb = pure_diffusion(1, lambda x: np.ones(len(x)))
    V = FESpace(build_box_mesh(1, 4), 1)
    tr = run(pb, V, SchemeConfig(0.25))
    with pytest.raises(ValueError):
        error_norms(tr, pb, V)


def test_table1_first_rows():
    pb = travelling_wave(1)
    rows = []
    for N in (32, 64):
        V = FESpace(build_box_mesh(1, N), 1)
        dt = 8.0 / N
        rep = error_norms(run(pb, V, SchemeConfig(dt)), pb, V)
        rows.append(ConvergenceRow(N, dt, rep, 0.0))
    assert rows[0].errors.e_linf_l2 == pytest.approx(2.49e-2, rel=0.01)
    assert rows[0].errors.e_l2_h10 == pytest.approx(4.05e-2, rel=0.01)
    assert rows[0].errors.e_linf_h10 == pytest.approx(4.36e-2, rel=0.01)
    assert rows[1].errors.e_linf_l2 == pytest.approx(9.02e-3, rel=0.01)
    table = eoc(ConvergenceTable(rows))
    assert table.rows[1].eocs["E_linf_L2"] == pytest.approx(1.46, abs=0.01)


@given(st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=30), st.floats(1e-3, 0.2))
def test_l2_bounded_by_sqrt_T_times_linf(sq, dt):
    mon = RunMonitor.__new__(RunMonitor)
    mon.dt = dt
    T = dt * len(sq)
    l2 = math.sqrt(dt * sum(sq))
    linf = math.sqrt(max(sq))
    assert l2 <= math.sqrt(T) * linf * (1 + 1e-12)


def _row(N, dt, e):
    return ConvergenceRow(N, dt, ErrorReport(e, e, e), 0.0)


def test_eoc_examples():
    t = eoc(ConvergenceTable([_row(32, 0.2, 1e-2), _row(64, 0.1, 5e-3), _row(128, 0.05, 1.25e-3)]))
    assert t.rows[0].eocs == {}
    assert t.rows[1].eocs["E_linf_L2"] == pytest.approx(1.0)
    assert t.rows[2].eocs["E_l2_H10"] == pytest.approx(2.0)
    t = eoc(ConvergenceTable([_row(32, 0.25, 2.49e-2), _row(64, 0.125, 9.02e-3)]))
    assert t.rows[1].eocs["E_linf_L2"] == pytest.approx(1.46, abs=0.005)


def test_eoc_zero_error_and_fixed_dt():
    t = eoc(ConvergenceTable([_row(32, 0.1, 1e-2), _row(64, 0.1, 0.0)]))
    assert t.step == "h"
    assert t.rows[1].eocs["E_linf_L2"] is None
    t = eoc(ConvergenceTable([_row(32, 0.1, 4e-2), _row(64, 0.1, 1e-2)]))
    assert t.rows[1].eocs["E_linf_L2"] == pytest.approx(2.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_mass_metrics_zero_velocity(dim):
    pb = pure_diffusion(dim, lambda x: np.full(len(x), 1.5), nu=0.1, T=0.4)
    V = FESpace(build_box_mesh(dim, 3), 1)
    tr = run(pb, V, SchemeConfig(0.1))
    m = mass_metrics(tr, pb, V)
    assert m.e_mass_prime <= 1e-13
    assert np.allclose(m.m_h, 1.5 * 2.0**dim, rtol=1e-13)
    assert math.isnan(m.e_mass)


@pytest.mark.parametrize("variant", ["mp2", "rt1"])
@pytest.mark.parametrize("dim", [1, 2])
def test_balance_with_sources(dim, variant):
    f = lambda x, t: np.ones(len(x))
    g = lambda x, t: 0.5 + x[:, 0]
    pb = pure_diffusion(dim, lambda x: 1.0 + x[:, 0] ** 2, nu=0.1, T=0.5, f=f, g=g)
    V = FESpace(build_box_mesh(dim, 4), 1)
    tr = run(pb, V, SchemeConfig(0.1, variant))
    res = mass_balance_residual(tr, pb, V)
    assert len(res) == tr.num_steps + 1
    assert np.abs(res).max() <= 1e-13


def test_balance_residual_decreases_for_moving_flow():
    pb = travelling_wave(2)
    worst = []
    for N in (16, 32):
        V = FESpace(build_box_mesh(2, N), 1)
        tr = run(pb, V, SchemeConfig(8.0 / N))
        worst.append(np.abs(mass_balance_residual(tr, pb, V)).max())
    assert worst[1] < worst[0]


def test_streamed_metrics_match_replayed():
    pb = travelling_wave(2)
    V = FESpace(build_box_mesh(2, 8), 1)
    mon = RunMonitor(V, pb, 0.125)
    tr = run(pb, V, SchemeConfig(0.125), on_step=mon)
    assert mon.error_report() == error_norms(tr, pb, V)
    a, b = mon.mass_report(), mass_metrics(tr, pb, V)
    assert a.as_dict() == b.as_dict()
    assert mon.error_report().e_h1_l2 is not None


def test_truncation_zero_for_quadratic_in_time():
    mesh = build_box_mesh(2, 4)
    u = VelocityField.zero(2)
    phi = lambda x, t: np.full(len(x), 1.0 + 2.0 * t + 3.0 * t * t)
    rate = lambda x, t: np.full(len(x), 2.0 + 6.0 * t)
    for _, err in truncation_probe(u, phi, rate, [0.1, 0.05], mesh, order=2):
        assert err <= 1e-12


def test_truncation_slopes():
    pb = travelling_wave(2, nu=0.1)
    mesh = build_box_mesh(2, 32)
    dts = [0.1 * 2.0**-j for j in range(6)]
    s2 = fitted_slope(truncation_probe(pb.velocity, pb.exact, pb.material_rate, dts, mesh, order=2))
    s1 = fitted_slope(truncation_probe(pb.velocity, pb.exact, pb.material_rate, dts, mesh, order=1))
    assert s2 >= 1.9
    assert 0.9 <= s1 <= 1.2


def test_gronwall_small_sweep():
    r = gronwall_check(500, seed=3)
    assert r.ok and r.trials == 500
    assert 0.0 <= r.max_ratio <= 1.0
    assert gronwall_check(500, seed=3) == r


def test_gronwall_rejects_zero_trials():
    with pytest.raises(ValueError):
        gronwall_check(0)


def test_root_properties_hold_at_boundary_of_admissible_step():
    a0 = np.array([1.0, 2.0, 0.0])
    a1 = np.array([1.0, 0.5, 3.0])
    a2 = np.array([0.5, 0.5, 0.0])
    dt = np.array([0.75, 0.375, 0.01])
    assert not root_property_failures(a0, a1, a2, dt, n_max=50).any()


def test_root_property_check_can_fail():
    # a1 < a2 breaks the inequality's assumptions; pq <= 2/3 then fails
    assert root_property_failures(np.array([0.0]), np.array([0.0]), np.array([-5.0]), np.array([0.1])).any()
