"""Closed-form rigid-body dynamics of the leg on its vertical rail.

Generalized coordinates are ``q = (z_b, phi_hfe, phi_kfe)``: base height above
the ground, hip angle and knee angle. Both angles are zero with the leg hanging
straight down and grow when the foot swings towards +x. The hip sits
``hip_offset`` below the base on the rail line (x = 0).

Equations of motion::

    M(q) qdd + b(q, qd) + g(q) = J_c(q)^T f_c + S^T tau

with ``g`` the gradient of the potential energy (so ``g[0] > 0``) and ``f_c``
the (x, z) ground force acting on the foot centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from hopleg.model import LegModel

HIP_RANGE = (-math.radians(150.0), math.radians(150.0))
KNEE_RANGE = (0.0, math.pi)

SELECTION = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
BASE_JACOBIAN = np.array([[1.0, 0.0, 0.0]])


class SingularMassMatrixError(np.linalg.LinAlgError):
    pass


class _P(NamedTuple):
    mt: float  # total mass
    m1: float
    m2: float
    l1: float
    l2: float
    r1: float
    r2: float
    i1: float
    i2: float
    jr1: float  # reflected rotor inertias
    jr2: float
    h: float
    grav: float
    rf: float


@lru_cache(maxsize=64)
def params(model: LegModel) -> _P:
    jr1, jr2 = model.reflected_rotor_inertias
    return _P(
        model.total_mass,
        *model.link_masses,
        *model.link_lengths,
        *model.link_com_offsets,
        *model.link_inertias,
        jr1,
        jr2,
        model.hip_offset,
        model.gravity,
        model.foot_radius,
    )


@dataclass
class GeneralizedState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(3)
        self.qd = np.asarray(self.qd, dtype=float).reshape(3)

    def is_valid(self) -> bool:
        finite = bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd)))
        return finite and in_range_of_motion(self.q)


def in_range_of_motion(q) -> bool:
    return HIP_RANGE[0] <= q[1] <= HIP_RANGE[1] and KNEE_RANGE[0] <= q[2] <= KNEE_RANGE[1]


@dataclass
class DynamicsTerms:
    M: np.ndarray
    b: np.ndarray
    g: np.ndarray
    J_c: np.ndarray
    J_b: np.ndarray
    S: np.ndarray


# Scalar kernels. The simulator calls these directly; the array functions
# below wrap them for library use.


def mass_entries(p: _P, a1: float, a2: float, rotors: bool = True):
    """Upper triangle (m00, m01, m02, m11, m12, m22) of the mass matrix."""
    s1, s12, c2 = math.sin(a1), math.sin(a1 + a2), math.cos(a2)
    m2r2 = p.m2 * p.r2
    m01 = (p.m1 * p.r1 + p.m2 * p.l1) * s1 + m2r2 * s12
    m02 = m2r2 * s12
    m12 = m2r2 * (p.r2 + p.l1 * c2) + p.i2
    m22 = m2r2 * p.r2 + p.i2
    m11 = p.m1 * p.r1 * p.r1 + p.i1 + p.m2 * (p.l1 * p.l1 + 2.0 * p.l1 * p.r2 * c2) + m22
    if rotors:
        m11 += p.jr1
        m22 += p.jr2
    return p.mt, m01, m02, m11, m12, m22


def bias_entries(p: _P, a1: float, a2: float, a1d: float, a2d: float):
    """Coriolis/centripetal and gravity generalized forces as two 3-tuples."""
    s1, c1 = math.sin(a1), math.cos(a1)
    s12, c12 = math.sin(a1 + a2), math.cos(a1 + a2)
    s2 = math.sin(a2)
    w2 = a1d + a2d
    m2r2 = p.m2 * p.r2
    k1 = p.m1 * p.r1 + p.m2 * p.l1
    h = p.m2 * p.l1 * p.r2 * s2
    b = (
        k1 * c1 * a1d * a1d + m2r2 * c12 * w2 * w2,
        -h * (2.0 * a1d * a2d + a2d * a2d),
        h * a1d * a1d,
    )
    g = (p.mt * p.grav, p.grav * (k1 * s1 + m2r2 * s12), p.grav * m2r2 * s12)
    return b, g


def foot_kinematics(p: _P, z: float, a1: float, a2: float, zd: float, a1d: float, a2d: float):
    """Foot centre (x, z), its velocity and the non-trivial Jacobian entries."""
    s1, c1 = math.sin(a1), math.cos(a1)
    s12, c12 = math.sin(a1 + a2), math.cos(a1 + a2)
    jx1 = p.l1 * c1 + p.l2 * c12
    jx2 = p.l2 * c12
    jz1 = p.l1 * s1 + p.l2 * s12
    jz2 = p.l2 * s12
    x = p.l1 * s1 + p.l2 * s12
    zf = z - p.h - p.l1 * c1 - p.l2 * c12
    xd = jx1 * a1d + jx2 * a2d
    zfd = zd + jz1 * a1d + jz2 * a2d
    return x, zf, xd, zfd, jx1, jx2, jz1, jz2


def solve3(m00, m01, m02, m11, m12, m22, r0, r1, r2):
    """Solve a symmetric positive-definite 3x3 system by Cholesky."""
    if not m00 > 0.0:
        raise SingularMassMatrixError("mass matrix is not positive definite")
    l00 = math.sqrt(m00)
    l10 = m01 / l00
    l20 = m02 / l00
    d1 = m11 - l10 * l10
    if not d1 > 1e-300:
        raise SingularMassMatrixError("mass matrix is not positive definite")
    l11 = math.sqrt(d1)
    l21 = (m12 - l20 * l10) / l11
    d2 = m22 - l20 * l20 - l21 * l21
    if not d2 > 1e-300:
        raise SingularMassMatrixError("mass matrix is not positive definite")
    l22 = math.sqrt(d2)
    y0 = r0 / l00
    y1 = (r1 - l10 * y0) / l11
    y2 = (r2 - l20 * y0 - l21 * y1) / l22
    x2 = y2 / l22
    x1 = (y1 - l21 * x2) / l11
    x0 = (y0 - l10 * x1 - l20 * x2) / l00
    return x0, x1, x2


# Array API.


def foot_position(q, model: LegModel) -> np.ndarray:
    """Foot-sphere centre (x, z); z above the ground, x from the rail line."""
    p = params(model)
    x, zf, *_ = foot_kinematics(p, q[0], q[1], q[2], 0.0, 0.0, 0.0)
    return np.array([x, zf])


def foot_velocity(q, qd, model: LegModel) -> np.ndarray:
    p = params(model)
    _, _, xd, zd, *_ = foot_kinematics(p, *q, *qd)
    return np.array([xd, zd])


def foot_jacobian(q, model: LegModel) -> np.ndarray:
    p = params(model)
    *_, jx1, jx2, jz1, jz2 = foot_kinematics(p, q[0], q[1], q[2], 0.0, 0.0, 0.0)
    return np.array([[0.0, jx1, jx2], [1.0, jz1, jz2]])


def mass_matrix(q, model: LegModel, include_rotors: bool = True) -> np.ndarray:
    """Generalized mass matrix.

    With ``include_rotors`` the reflected rotor inertia ``I_r * n**2`` is added
    to each joint diagonal (rigid transmission). The simulator keeps the rotors
    as separate elastic bodies and passes ``include_rotors=False``.
    """
    m00, m01, m02, m11, m12, m22 = mass_entries(params(model), q[1], q[2], include_rotors)
    return np.array([[m00, m01, m02], [m01, m11, m12], [m02, m12, m22]])


def nonlinear_and_gravity(q, qd, model: LegModel) -> tuple[np.ndarray, np.ndarray]:
    b, g = bias_entries(params(model), q[1], q[2], qd[1], qd[2])
    return np.array(b), np.array(g)


def dynamics_terms(q, qd, model: LegModel, include_rotors: bool = True) -> DynamicsTerms:
    b, g = nonlinear_and_gravity(q, qd, model)
    return DynamicsTerms(
        M=mass_matrix(q, model, include_rotors),
        b=b,
        g=g,
        J_c=foot_jacobian(q, model),
        J_b=BASE_JACOBIAN.copy(),
        S=SELECTION.copy(),
    )


def forward_dynamics(q, qd, tau, f_c, model: LegModel, include_rotors: bool = True) -> np.ndarray:
    """Generalized accelerations ``M^-1 (J_c^T f_c + S^T tau - b - g)``."""
    p = params(model)
    m = mass_entries(p, q[1], q[2], include_rotors)
    (b0, b1, b2), (g0, g1, g2) = bias_entries(p, q[1], q[2], qd[1], qd[2])
    *_, jx1, jx2, jz1, jz2 = foot_kinematics(p, q[0], q[1], q[2], 0.0, 0.0, 0.0)
    fx, fz = f_c
    rhs = (
        fz - b0 - g0,
        jx1 * fx + jz1 * fz + tau[0] - b1 - g1,
        jx2 * fx + jz2 * fz + tau[1] - b2 - g2,
    )
    return np.array(solve3(*m, *rhs))


def potential_energy(q, model: LegModel) -> float:
    """Gravitational potential energy, zero with every body at ground height."""
    p = params(model)
    z, a1, a2 = q
    c1, c12 = math.cos(a1), math.cos(a1 + a2)
    hip = z - p.h
    heights = (
        (model.carried_mass, z),
        (p.m1, hip - p.r1 * c1),
        (p.m2, hip - p.l1 * c1 - p.r2 * c12),
    )
    return p.grav * sum(m * h for m, h in heights)


def kinetic_energy(q, qd, model: LegModel, include_rotors: bool = True) -> float:
    M = mass_matrix(q, model, include_rotors)
    qd = np.asarray(qd, dtype=float)
    return 0.5 * float(qd @ M @ qd)


def leg_extension(q, model: LegModel) -> float:
    """Hip to foot-centre distance."""
    l1, l2 = model.link_lengths
    return math.sqrt(l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * math.cos(q[2]))
