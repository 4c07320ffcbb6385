import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hopleg import dynamics as dyn
from hopleg.contact import GroundModel, contact_force, detect_contact, normal_tangential, penetration

ground = GroundModel()
finite = st.floats(-10, 10, allow_nan=False)


def test_no_penetration_gives_no_force():
    assert normal_tangential(ground, -1e-3, 0.3, -2.0) == (0.0, 0.0)


def test_static_penetration_is_pure_spring():
    ft, fn = normal_tangential(ground, 2e-3, 0.0, 0.0)
    assert fn == pytest.approx(ground.stiffness * 2e-3)
    assert ft == 0.0


def test_rising_foot_never_pulls():
    # fast separation would make k*delta - d*zd negative
    assert normal_tangential(ground, 1e-4, 0.0, 5.0) == (0.0, 0.0)


@given(st.floats(-0.01, 0.01), finite, finite)
def test_force_stays_in_friction_cone(pen, xd, zd):
    ft, fn = normal_tangential(ground, pen, xd, zd)
    assert fn >= 0.0
    assert abs(ft) <= ground.friction_mu * fn + 1e-12
    if pen < 0:
        assert fn == 0.0 and ft == 0.0


@given(st.floats(0.0, 0.01), finite, finite)
def test_contact_damping_never_adds_energy(pen, xd, zd):
    # spring part returns what it stored; damping and friction power must be <= 0
    ft, fn = normal_tangential(ground, pen, xd, zd)
    spring = ground.stiffness * pen if fn > 0 else 0.0
    assert ft * xd + (fn - spring) * zd <= 1e-9


def test_stretched_leg_high_up_is_not_in_contact(leg):
    assert not detect_contact((1.2, 0.0, 0.0), leg)


def test_contact_boundary_is_included(leg):
    q = np.array([0.0, 0.3, 0.9])
    _, foot_z = dyn.foot_position(q, leg)
    q[0] = leg.foot_radius - foot_z  # sphere bottom exactly on the ground
    assert penetration(q, leg, ground) == pytest.approx(0.0, abs=1e-15)
    q[0] -= 1e-12
    assert detect_contact(q, leg)
    q[0] += 1e-9
    assert not detect_contact(q, leg)


def test_contact_force_uses_foot_velocity(leg):
    q = np.array([0.57 + leg.foot_radius - 0.001, 0.0, 0.0])  # stretched, 1 mm deep
    f = contact_force(q, np.zeros(3), leg)
    assert f[1] == pytest.approx(ground.stiffness * 1e-3)
    f_moving = contact_force(q, np.array([-0.1, 0.0, 0.0]), leg)
    assert f_moving[1] == pytest.approx(ground.stiffness * 1e-3 + ground.damping * 0.1)
