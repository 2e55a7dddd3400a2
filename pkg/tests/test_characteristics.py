import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mplg.characteristics import (
    JacobianRangeWarning,
    VelocityField,
    characteristic_foot,
    composed_term,
    det_identity_minus,
    divergence_and_deltas,
    expansion_check,
    jacobian_det,
    upwind_point,
)
from mplg.fem import FESpace, interpolate
from mplg.mesh import build_box_mesh
from mplg.problems import travelling_wave

matrices = st.integers(1, 3).flatmap(
    lambda d: arrays(np.float64, (d, d), elements=st.floats(-2, 2, allow_nan=False))
)


@given(matrices, st.floats(0, 1))
def test_det_matches_numpy(G, dt):
    expect = np.linalg.det(np.eye(len(G)) - dt * G)
    assert det_identity_minus(dt, G) == pytest.approx(expect, abs=1e-12)


@given(matrices, st.floats(0, 1))
def test_expansion_identity(G, dt):
    div, d1, d2 = divergence_and_deltas(G)
    direct = det_identity_minus(dt, G)
    assert 1 - dt * div + dt**2 * d1 + dt**3 * d2 == pytest.approx(direct, abs=1e-13)


def test_invariants_against_characteristic_polynomial():
    # det(I - tG) = 1 - t tr G + t^2 e2 - t^3 det G
    rng = np.random.default_rng(0)
    G = rng.normal(size=(3, 3))
    div, d1, d2 = divergence_and_deltas(G)
    coeffs = np.poly(G)  # x^3 - tr x^2 + e2 x - det
    assert div == pytest.approx(-coeffs[1])
    assert d1 == pytest.approx(coeffs[2])
    assert d2 == pytest.approx(coeffs[3])


def test_expansion_check_on_field():
    u = travelling_wave(3).velocity
    x = np.random.default_rng(2).uniform(-1, 1, (100, 3))
    r = expansion_check(u, 0.3, 0.05, x)
    assert np.allclose(r["direct"], r["expanded"], atol=1e-14)


def test_zero_velocity_gives_unit_jacobian_and_fixed_feet():
    u = VelocityField.zero(2)
    x = np.array([[0.2, -0.4]])
    assert np.array_equal(upwind_point(u, 0.0, 0.5, x), x)
    assert jacobian_det(u, 0.0, 0.5, x[0]) == 1.0


def test_linear_field_jacobian():
    A = np.array([[0.5, 0.1], [0.0, -0.3]])
    u = VelocityField.linear(A)
    g = jacobian_det(u, 0.0, 0.2, np.zeros(2))
    assert g == pytest.approx(np.linalg.det(np.eye(2) - 0.2 * A))


def test_out_of_range_jacobian_warns():
    u = VelocityField.linear(np.array([[4.0]]))
    with pytest.warns(JacobianRangeWarning):
        jacobian_det(u, 0.0, 0.5, np.zeros(1))


def test_characteristic_foot_locates():
    mesh = build_box_mesh(2, 4)
    u = VelocityField.constant([1.0, 0.5])
    f = characteristic_foot(u, 0.0, 0.2, [0.3, 0.3], mesh)
    assert np.allclose(f.foot, [0.1, 0.2])
    assert f.jacobian == 1.0 and f.location.inside


def test_composed_term_constant_shift():
    V = FESpace(build_box_mesh(1, 8), 1)
    fun = interpolate(V, lambda x: 2.0 * x[:, 0])
    u = VelocityField.constant([1.0])
    x = np.array([[0.5], [0.0]])
    assert np.allclose(composed_term(fun, u, 0.0, 1, 0.25, x), 2.0 * (x[:, 0] - 0.25))
    assert np.allclose(composed_term(fun, u, 0.0, 2, 0.25, x), 2.0 * (x[:, 0] - 0.5))
    with pytest.raises(ValueError):
        composed_term(fun, u, 0.0, 3, 0.25, x)


def test_mass_identity_of_jacobian_weighting():
    # X(x) = x - 0.02 (1 - x^2) maps [-1, 1] onto itself, so the weighted
    # composition has the same integral; split at preimages of the nodes so
    # Gauss integrates each polynomial piece exactly
    u = VelocityField(lambda x, t: 0.2 * (1 - x**2), lambda x, t: (-0.4 * x)[..., None], 0.4)
    V = FESpace(build_box_mesh(1, 64), 1)
    fun = interpolate(V, lambda x: np.exp(x[:, 0]))
    nodes = V.dof_points[:, 0]
    # 0.02 x^2 + x - (0.02 + y) = 0
    pre = (-1 + np.sqrt(1 + 0.08 * (0.02 + nodes))) / 0.04
    gx, gw = np.polynomial.legendre.leggauss(4)
    a, b = pre[:-1, None], pre[1:, None]
    xs = (0.5 * (b - a) * gx + 0.5 * (a + b)).ravel()
    ws = (0.5 * (b - a) * gw).ravel()
    vals = composed_term(fun, u, 0.0, 1, 0.1, xs[:, None])
    assert ws @ vals == pytest.approx(fun.integral(), rel=1e-13)
