import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopleg import dynamics as dyn
from hopleg.model import default_leg_model

from conftest import random_states


# Independent oracles -------------------------------------------------------


def foot_complex(q, leg):
    """Foot centre as a complex number x + iz; a link at angle t points along -i e^{it}."""
    z, a1, a2 = q
    l1, l2 = leg.link_lengths
    hip = 1j * (z - leg.hip_offset)
    return hip - 1j * l1 * cmath.exp(1j * a1) - 1j * l2 * cmath.exp(1j * (a1 + a2))


def per_body_kinetic_energy(q, qd, leg, rotors=True):
    z, a1, a2 = q
    zd, w1, w2rel = qd
    l1, _ = leg.link_lengths
    r1, r2 = leg.link_com_offsets
    m1, m2 = leg.link_masses
    i1, i2 = leg.link_inertias
    w2 = w1 + w2rel
    # d/dt of -i r e^{it} is r w e^{it}
    v1 = 1j * zd + r1 * w1 * cmath.exp(1j * a1)
    v2 = 1j * zd + l1 * w1 * cmath.exp(1j * a1) + r2 * w2 * cmath.exp(1j * (a1 + a2))
    energy = 0.5 * leg.carried_mass * zd**2
    energy += 0.5 * m1 * abs(v1) ** 2 + 0.5 * i1 * w1**2
    energy += 0.5 * m2 * abs(v2) ** 2 + 0.5 * i2 * w2**2
    if rotors:
        for inertia, ratio, w in zip(leg.rotor_inertias, leg.gear_ratios, (w1, w2rel)):
            energy += 0.5 * inertia * (ratio * w) ** 2
    return energy


def fd_jacobian(fun, q, h):
    q = np.asarray(q, dtype=float)
    cols = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        cols.append((np.asarray(fun(q + e)) - np.asarray(fun(q - e))) / (2 * h))
    return np.array(cols).T


# Kinematics ----------------------------------------------------------------


def test_stretched_pose_foot_touches_ground_at_published_length(leg):
    x, z = dyn.foot_position((0.57, 0.0, 0.0), leg)
    assert x == pytest.approx(0.0, abs=1e-15)
    assert z == pytest.approx(0.0, abs=1e-12)
    assert leg.hip_offset == pytest.approx(0.08)


def test_knee_right_angle(leg):
    z = 0.9
    x, zf = dyn.foot_position((z, 0.0, math.pi / 2), leg)
    assert x == pytest.approx(leg.link_lengths[1], abs=1e-15)
    assert zf == pytest.approx(z - leg.hip_offset - leg.link_lengths[0], abs=1e-15)


def test_foot_position_matches_complex_oracle(leg):
    qs, _ = random_states(500, seed=1)
    for q in qs:
        ref = foot_complex(q, leg)
        x, z = dyn.foot_position(q, leg)
        assert x == pytest.approx(ref.real, abs=1e-12)
        assert z == pytest.approx(ref.imag, abs=1e-12)


def test_foot_jacobian_base_column(leg):
    qs, _ = random_states(50, seed=2)
    for q in qs:
        J = dyn.foot_jacobian(q, leg)
        assert J[:, 0].tolist() == [0.0, 1.0]


def test_foot_jacobian_matches_finite_differences(leg):
    qs, _ = random_states(2000, seed=3)
    worst = 0.0
    for q in qs:
        num = fd_jacobian(lambda v: dyn.foot_position(v, leg), q, 1e-6)
        worst = max(worst, np.max(np.abs(num - dyn.foot_jacobian(q, leg))))
    assert worst <= 1e-6


def test_foot_jacobian_at_stretched_pose(leg):
    J = dyn.foot_jacobian((0.6, 0.0, 0.0), leg)
    assert J[1, 1] == 0.0 and J[1, 2] == 0.0
    assert J[0, 1] == pytest.approx(sum(leg.link_lengths))
    assert J[0, 2] == pytest.approx(leg.link_lengths[1])


def test_foot_velocity_is_jacobian_times_rates(leg):
    qs, qds = random_states(100, seed=4)
    for q, qd in zip(qs, qds):
        np.testing.assert_allclose(
            dyn.foot_velocity(q, qd, leg), dyn.foot_jacobian(q, leg) @ qd, atol=1e-12
        )


def test_leg_extension_values(leg):
    assert dyn.leg_extension((0.6, 0.3, 0.0), leg) == pytest.approx(0.49)
    assert dyn.leg_extension((0.6, -1.0, math.pi / 2), leg) == pytest.approx(
        math.hypot(0.24, 0.25), abs=1e-12
    )
    assert math.hypot(0.24, 0.25) == pytest.approx(0.3466, abs=1e-4)


def test_leg_extension_equals_hip_to_foot_distance(leg):
    qs, _ = random_states(200, seed=5)
    for q in qs:
        hip = 1j * (q[0] - leg.hip_offset)
        assert dyn.leg_extension(q, leg) == pytest.approx(abs(foot_complex(q, leg) - hip), abs=1e-12)


@given(st.floats(0.0, math.pi - 1e-3), st.floats(1e-4, 0.5))
def test_leg_extension_decreases_with_knee_bend(knee, step):
    leg = default_leg_model()
    knee2 = min(knee + step, math.pi)
    assert dyn.leg_extension((0, 0, knee2), leg) < dyn.leg_extension((0, 0, knee), leg)
    assert dyn.leg_extension((0, 0, -knee), leg) == pytest.approx(dyn.leg_extension((0, 0, knee), leg))


# Mass matrix ---------------------------------------------------------------


def test_degenerate_model_mass_matrix(leg):
    massless = leg.replace(link_masses=(0.0, 0.0), link_inertias=(0.0, 0.0), rotor_inertias=(0.0, 0.0))
    M = dyn.mass_matrix((0.5, 0.3, 0.7), massless)
    np.testing.assert_array_equal(M, np.diag([massless.total_mass, 0.0, 0.0]))
    assert massless.total_mass == pytest.approx(leg.carried_mass)
    with pytest.raises(dyn.SingularMassMatrixError):
        dyn.forward_dynamics((0.5, 0.3, 0.7), (0, 0, 0), (0, 0), (0, 0), massless)

    eps = 1e-5
    regular = massless.replace(rotor_inertias=(eps, eps))
    M = dyn.mass_matrix((0.5, 0.3, 0.7), regular)
    r1, r2 = leg.gear_ratios
    np.testing.assert_allclose(M, np.diag([leg.carried_mass, eps * r1**2, eps * r2**2]), rtol=1e-15)


def test_mass_matrix_symmetric_positive_definite(leg):
    qs, _ = random_states(10_000, seed=6)
    for q in qs:
        M = dyn.mass_matrix(q, leg)
        assert np.max(np.abs(M - M.T)) <= 1e-12
        np.linalg.cholesky(M)
        np.linalg.cholesky(dyn.mass_matrix(q, leg, include_rotors=False))


def test_kinetic_energy_matches_per_body_oracle(leg):
    qs, qds = random_states(1000, seed=7)
    for q, qd in zip(qs, qds):
        for rotors in (True, False):
            ref = per_body_kinetic_energy(q, qd, leg, rotors)
            assert dyn.kinetic_energy(q, qd, leg, rotors) == pytest.approx(ref, abs=1e-9)


# Bias forces ---------------------------------------------------------------


def test_bias_vanishes_at_rest(leg):
    qs, _ = random_states(50, seed=8)
    for q in qs:
        b, _ = dyn.nonlinear_and_gravity(q, np.zeros(3), leg)
        np.testing.assert_array_equal(b, 0.0)


def test_gravity_on_base_is_total_weight(leg):
    qs, qds = random_states(50, seed=9)
    for q, qd in zip(qs, qds):
        _, g = dyn.nonlinear_and_gravity(q, qd, leg)
        assert g[0] == pytest.approx(6.0 * 9.81, rel=1e-12)


def test_gravity_is_potential_gradient(leg):
    qs, _ = random_states(500, seed=10)
    for q in qs:
        _, g = dyn.nonlinear_and_gravity(q, np.zeros(3), leg)
        grad = fd_jacobian(lambda v: [dyn.potential_energy(v, leg)], q, 1e-5)[0]
        np.testing.assert_allclose(g, grad, atol=1e-8)


def test_coriolis_power_equals_half_mass_matrix_rate(leg):
    # q'^T b = 1/2 q'^T dM/dt q' (skew-symmetry of dM/dt - 2C).
    qs, qds = random_states(300, seed=11)
    h = 1e-6
    for q, qd in zip(qs, qds):
        mdot = (dyn.mass_matrix(q + h * qd, leg) - dyn.mass_matrix(q - h * qd, leg)) / (2 * h)
        b, _ = dyn.nonlinear_and_gravity(q, qd, leg)
        assert qd @ b == pytest.approx(0.5 * qd @ mdot @ qd, abs=1e-7)


def _rk4(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def test_kinetic_energy_rate_along_trajectory(leg):
    # dT/dt = q'^T (Q - g) with Q the applied generalized force.
    tau = np.array([1.5, -0.8])
    applied = dyn.SELECTION.T @ tau

    def f(x):
        q, qd = x[:3], x[3:]
        return np.concatenate([qd, dyn.forward_dynamics(q, qd, tau, (0, 0), leg)])

    x = np.array([1.0, 0.4, 1.1, 0.3, 2.0, -3.0])
    dt = 1e-4
    xs = [x]
    for _ in range(400):
        xs.append(_rk4(f, xs[-1], dt))
    energy = [dyn.kinetic_energy(s[:3], s[3:], leg) for s in xs]
    for i in range(1, len(xs) - 1, 37):
        rate = (energy[i + 1] - energy[i - 1]) / (2 * dt)
        q, qd = xs[i][:3], xs[i][3:]
        _, g = dyn.nonlinear_and_gravity(q, qd, leg)
        assert rate == pytest.approx(qd @ (applied - g), abs=1e-6)


# Forward dynamics ----------------------------------------------------------


def test_torque_free_rest_is_free_fall(leg):
    qs, _ = random_states(20, seed=12)
    for q in qs:
        qdd = dyn.forward_dynamics(q, np.zeros(3), (0, 0), (0, 0), leg)
        # rotor inertia resists nothing here: every body falls with the base
        np.testing.assert_allclose(qdd, [-9.81, 0.0, 0.0], atol=1e-12)


def test_free_fall_matches_explicit_linear_solve(leg):
    q = np.array([0.8, -0.6, 1.2])
    qd = np.array([0.0, 1.5, -2.0])
    M = dyn.mass_matrix(q, leg)
    b, g = dyn.nonlinear_and_gravity(q, qd, leg)
    np.testing.assert_allclose(
        dyn.forward_dynamics(q, qd, (0, 0), (0, 0), leg), np.linalg.solve(M, -b - g), rtol=1e-12
    )


def test_static_equilibrium_is_stationary(leg):
    q = np.array([0.45, -0.7, 1.3])
    _, g = dyn.nonlinear_and_gravity(q, np.zeros(3), leg)
    J = dyn.foot_jacobian(q, leg)
    f_c = np.array([0.0, leg.total_mass * leg.gravity])
    tau = g[1:] - J[:, 1:].T @ f_c
    qdd = dyn.forward_dynamics(q, np.zeros(3), tau, f_c, leg)
    np.testing.assert_allclose(qdd, 0.0, atol=1e-8)


def test_forward_dynamics_matches_momentum_form(leg):
    # Euler-Lagrange in momentum form: d(Mq')/dt = Q - g + 1/2 q'^T dM/dq q'.
    rng = np.random.default_rng(13)
    qs, qds = random_states(100, seed=13)
    h = 1e-6
    for q, qd in zip(qs, qds):
        tau = rng.uniform(-70, 70, 2)
        f_c = rng.uniform(-100, 300, 2)
        M = dyn.mass_matrix(q, leg)
        dM = [
            (dyn.mass_matrix(q + h * e, leg) - dyn.mass_matrix(q - h * e, leg)) / (2 * h)
            for e in np.eye(3)
        ]
        mdot = sum(d * v for d, v in zip(dM, qd))
        _, g = dyn.nonlinear_and_gravity(q, qd, leg)
        Q = dyn.foot_jacobian(q, leg).T @ f_c + dyn.SELECTION.T @ tau
        pdot = Q - g + 0.5 * np.array([qd @ d @ qd for d in dM])
        ref = np.linalg.solve(M, pdot - mdot @ qd)
        np.testing.assert_allclose(dyn.forward_dynamics(q, qd, tau, f_c, leg), ref, atol=1e-6, rtol=1e-8)


def test_generalized_state_validity():
    assert dyn.GeneralizedState([0.5, 0.0, 1.0], [0, 0, 0]).is_valid()
    assert not dyn.GeneralizedState([0.5, 0.0, -0.2], [0, 0, 0]).is_valid()
    assert not dyn.GeneralizedState([0.5, math.radians(151), 0.5], [0, 0, 0]).is_valid()
    assert not dyn.GeneralizedState([np.nan, 0.0, 0.5], [0, 0, 0]).is_valid()


def test_dynamics_terms_bundle(leg):
    terms = dyn.dynamics_terms((0.5, 0.2, 0.9), (0.1, 0.2, 0.3), leg)
    assert terms.M.shape == (3, 3) and terms.J_c.shape == (2, 3)
    np.testing.assert_array_equal(terms.J_b, [[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(terms.S, [[0, 1, 0], [0, 0, 1]])
