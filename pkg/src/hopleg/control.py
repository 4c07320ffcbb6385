"""Stance virtual-model control, flight inverse dynamics and the phase switch.

Stance: a virtual vertical spring-damper between base and ground. Under a
quasi-static assumption the ground must carry the weight plus the spring
force, and the joint torques that make the foot push that hard are

    tau = S (g - J_c^T f_w + J_bs^T f_s),   f_w = (0, m g)

where ``J_bs`` is the base Jacobian with the foot held on the ground
(``J_bs = -J_c[z, joints]``). Flight: a PID law on joint angles gives desired
joint accelerations, turned into torques with the floating-base model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from hopleg import dynamics as dyn
from hopleg.model import LegModel


class Phase(enum.Enum):
    STANCE = "stance"
    FLIGHT = "flight"


@dataclass(frozen=True)
class ControllerConfig:
    k_s: float = 2500.0  # N/m
    d_s: float = 40.0  # N s/m
    z_target: float = 0.45  # m
    kp: tuple[float, float] = (900.0, 900.0)  # 1/s^2
    ki: tuple[float, float] = (0.0, 0.0)  # 1/s^3
    kd: tuple[float, float] = (60.0, 60.0)  # 1/s
    q_flight: tuple[float, float] = (-0.8, 1.6)  # rad
    extension_switch_threshold: float = 0.4  # m
    integral_clamp: float = 0.5  # rad s
    torque_limit: float = 70.0  # Nm
    min_flight_time: float = 0.0  # s
    rate: float = 2500.0  # Hz
    model_scale: float = 1.0  # mass/inertia scaling of the internal model

    def validate(self, model: LegModel) -> list[str]:
        errors = []
        gains = (self.k_s, self.d_s, *self.kp, *self.ki, *self.kd, self.integral_clamp)
        if any(g < 0 for g in gains):
            errors.append("controller gains must be nonnegative")
        if not 0 < self.extension_switch_threshold < sum(model.link_lengths):
            errors.append("extension_switch_threshold must lie in (0, l1 + l2)")
        if self.rate <= 0 or self.torque_limit <= 0 or self.model_scale <= 0:
            errors.append("rate, torque_limit and model_scale must be positive")
        return errors


@dataclass
class PhaseState:
    phase: Phase = Phase.STANCE
    integral: np.ndarray = field(default_factory=lambda: np.zeros(2))
    time_in_phase: float = 0.0


def virtual_spring_force(z_b: float, zd_b: float, config: ControllerConfig) -> float:
    """Vertical force of the virtual spring-damper on the base."""
    return config.k_s * (config.z_target - z_b) - config.d_s * zd_b


def internal_model(model: LegModel, config: ControllerConfig) -> LegModel:
    """Controller's estimate of the plant (mass/inertia scaled by ``model_scale``)."""
    s = config.model_scale
    if s == 1.0:
        return model
    return model.replace(
        base_mass=model.base_mass * s,
        payload_mass=model.payload_mass * s,
        link_masses=tuple(m * s for m in model.link_masses),
        link_inertias=tuple(i * s for i in model.link_inertias),
        rotor_inertias=tuple(i * s for i in model.rotor_inertias),
    )


def stance_base_jacobian(q, model: LegModel) -> np.ndarray:
    """Base vertical velocity per generalized velocity with the foot fixed."""
    J = dyn.foot_jacobian(q, model)
    return np.array([[0.0, -J[1, 1], -J[1, 2]]])


def _clip(tau, limit):
    return np.clip(tau, -limit, limit)


def vmc_stance_torque(q, qd, config: ControllerConfig, model: LegModel) -> np.ndarray:
    f_s = virtual_spring_force(q[0], qd[0], config)
    _, g = dyn.nonlinear_and_gravity(q, np.zeros(3), model)
    J_c = dyn.foot_jacobian(q, model)
    J_bs = stance_base_jacobian(q, model)
    f_w = np.array([0.0, model.total_mass * model.gravity])
    tau = dyn.SELECTION @ (g - J_c.T @ f_w + J_bs[0] * f_s)
    return _clip(tau, config.torque_limit)


def integrate_error(integral, q_joint, config: ControllerConfig, dt: float) -> np.ndarray:
    """Advance the PID integral of (q* - q) and clamp it."""
    err = np.asarray(config.q_flight) - np.asarray(q_joint, dtype=float)
    return np.clip(np.asarray(integral) + err * dt, -config.integral_clamp, config.integral_clamp)


def pid_accel(q_joint, qd_joint, integral, config: ControllerConfig, q_ref=None, qd_ref=None,
              qdd_ref=None) -> np.ndarray:
    """Desired joint accelerations from a PID law towards the flight pose.

    The reference defaults to ``config.q_flight`` held still. Passing a moving
    reference with its rates adds velocity and acceleration feedforward.
    """
    q_ref = np.asarray(config.q_flight if q_ref is None else q_ref, dtype=float)
    qd_ref = np.zeros(2) if qd_ref is None else np.asarray(qd_ref, dtype=float)
    qdd_ref = np.zeros(2) if qdd_ref is None else np.asarray(qdd_ref, dtype=float)
    err = q_ref - np.asarray(q_joint, dtype=float)
    integral = np.clip(np.asarray(integral, dtype=float), -config.integral_clamp, config.integral_clamp)
    return (
        qdd_ref
        + np.asarray(config.kp) * err
        + np.asarray(config.ki) * integral
        + np.asarray(config.kd) * (qd_ref - np.asarray(qd_joint, dtype=float))
    )


def idc_flight_torque(q, qd, qdd_joint, model: LegModel, torque_limit: float = 70.0) -> np.ndarray:
    """Joint torques realising ``qdd_joint`` with the base in free flight.

    The unactuated base row fixes the base acceleration that goes with the
    requested joint accelerations; the joint rows then give the torques.
    """
    p = dyn.params(model)
    m00, m01, m02, m11, m12, m22 = dyn.mass_entries(p, q[1], q[2], True)
    (b0, b1, b2), (g0, g1, g2) = dyn.bias_entries(p, q[1], q[2], qd[1], qd[2])
    a1, a2 = qdd_joint
    zdd = -(m01 * a1 + m02 * a2 + b0 + g0) / m00
    tau = np.array([
        m01 * zdd + m11 * a1 + m12 * a2 + b1 + g1,
        m02 * zdd + m12 * a1 + m22 * a2 + b2 + g2,
    ])
    return _clip(tau, torque_limit)


def phase_switch(phase: Phase, contact: bool, extension: float, config: ControllerConfig,
                 time_in_phase: float = math.inf) -> Phase:
    """Flight to stance on touchdown; stance to flight once the leg is extended.

    ``config.min_flight_time`` debounces touchdown right after a lift-off.
    """
    if phase is Phase.FLIGHT:
        if contact and time_in_phase >= config.min_flight_time:
            return Phase.STANCE
        return Phase.FLIGHT
    if extension > config.extension_switch_threshold:
        return Phase.FLIGHT
    return Phase.STANCE


class HopController:
    """Phase machine plus the two control laws, evaluated at ``config.rate``."""

    def __init__(self, config: ControllerConfig, model: LegModel, phase: Phase = Phase.STANCE):
        self.config = config
        self.model = internal_model(model, config)
        self.state = PhaseState(phase=phase)

    def update(self, q, qd, contact: bool, dt: float) -> np.ndarray:
        cfg, st = self.config, self.state
        new = phase_switch(st.phase, contact, dyn.leg_extension(q, self.model), cfg, st.time_in_phase)
        if new is not st.phase:
            st.phase, st.integral, st.time_in_phase = new, np.zeros(2), 0.0
        else:
            st.time_in_phase += dt
        if st.phase is Phase.STANCE:
            return vmc_stance_torque(q, qd, cfg, self.model)
        st.integral = integrate_error(st.integral, q[1:], cfg, dt)
        qdd = pid_accel(q[1:], qd[1:], st.integral, cfg)
        return idc_flight_torque(q, qd, qdd, self.model, cfg.torque_limit)
