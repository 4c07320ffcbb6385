"""Physical parameters of the rail-mounted two-joint leg.

Masses, lengths and inertias live in :class:`LegModel`; the drive side in
:class:`MotorParams` and :class:`CableParams`. Only aggregate figures are known
for the real hardware (leg weight, link lengths, stretched-leg inertia about
the hip), so the per-link mass split is solved by
:func:`calibrate_mass_distribution`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

# Published hardware figures used as validation targets.
LEG_WEIGHT = 4.0  # kg, leg without payload
PAYLOAD = 2.0  # kg, extra weight used in the experiments
LINK_LENGTHS = (0.24, 0.25)  # m
STRETCHED_HIP_INERTIA = 0.062  # kg m^2, links only, leg fully stretched
GEAR_RATIOS = (5.0, 5.33)
STRETCHED_LENGTH = 0.57  # m, base to foot centre
MAX_JOINT_TORQUE = 70.0  # Nm
MAX_JOINT_SPEED = 40.0  # rad/s
TORQUE_RESOLUTION = 0.07  # Nm
STATIC_TORQUE_ERROR = 0.1  # Nm
KNEE_MOTOR_CONSTANT = 4.58  # Nm/sqrt(W), joint side
BUS_VOLTAGE = 53.0  # V
CABLE_STIFFNESS = 1614.0  # Nm/rad, joint side


class InfeasibleInertiaError(ValueError):
    """No nonnegative link-mass split reproduces the requested inertia."""


@dataclass(frozen=True)
class LegModel:
    """Rigid-body parameters of base, thigh and shank.

    Angles are measured from the straight-down pose, positive swings the
    foot towards +x. Link 0 is the thigh, link 1 the shank.
    """

    base_mass: float
    payload_mass: float = PAYLOAD
    link_lengths: tuple[float, float] = LINK_LENGTHS
    link_masses: tuple[float, float] = (0.5, 0.5)
    link_com_offsets: tuple[float, float] = (0.108, 0.1125)
    link_inertias: tuple[float, float] = (2.4e-3, 2.6e-3)
    rotor_inertias: tuple[float, float] = (8.0e-4, 8.0e-4)
    gear_ratios: tuple[float, float] = GEAR_RATIOS
    foot_radius: float = 0.02
    hip_offset: float = STRETCHED_LENGTH - sum(LINK_LENGTHS)
    gravity: float = 9.81

    @property
    def leg_mass(self) -> float:
        return self.base_mass + sum(self.link_masses)

    @property
    def total_mass(self) -> float:
        return self.leg_mass + self.payload_mass

    @property
    def carried_mass(self) -> float:
        """Mass rigidly attached to the rail carriage (base plus payload)."""
        return self.base_mass + self.payload_mass

    @property
    def reflected_rotor_inertias(self) -> tuple[float, float]:
        return tuple(i * n * n for i, n in zip(self.rotor_inertias, self.gear_ratios))

    def stretched_hip_inertia(self) -> float:
        """Links-only inertia about the hip with the leg fully stretched."""
        (l1, _), (m1, m2) = self.link_lengths, self.link_masses
        (c1, c2), (i1, i2) = self.link_com_offsets, self.link_inertias
        return i1 + m1 * c1 * c1 + i2 + m2 * (l1 + c2) ** 2

    def replace(self, **changes) -> "LegModel":
        return replace(self, **changes)


def calibrate_mass_distribution(
    total_leg_mass: float,
    stretched_hip_inertia: float,
    link_lengths: tuple[float, float],
    thigh_fraction: float = 0.6,
    com_fraction: float = 0.45,
    gyration_factor: float = 1.0 / 12.0,
    **model_fields,
) -> LegModel:
    """Split the leg mass between base and links to hit a stretched hip inertia.

    Each link carries a share of the link mass (``thigh_fraction`` on the
    thigh), has its centre of mass at ``com_fraction`` of its length and an
    inertia about that centre of ``gyration_factor * m * l**2`` (1/12 is a
    uniform rod). The stretched hip inertia is then linear in the total link
    mass, which is solved for in closed form; the rest of the leg mass goes to
    the base.
    """
    if total_leg_mass <= 0:
        raise ValueError(f"total_leg_mass must be positive, got {total_leg_mass}")
    if not 0.0 <= thigh_fraction <= 1.0:
        raise ValueError(f"thigh_fraction must lie in [0, 1], got {thigh_fraction}")
    if not 0.0 < com_fraction <= 1.0 or gyration_factor < 0:
        raise ValueError("com_fraction must lie in (0, 1] and gyration_factor be >= 0")
    l1, l2 = (float(v) for v in link_lengths)
    if l1 <= 0 or l2 <= 0:
        raise ValueError(f"link lengths must be positive, got {link_lengths}")

    c1, c2 = com_fraction * l1, com_fraction * l2
    per_kg = thigh_fraction * (gyration_factor * l1 * l1 + c1 * c1) + (1.0 - thigh_fraction) * (
        gyration_factor * l2 * l2 + (l1 + c2) ** 2
    )
    link_mass = stretched_hip_inertia / per_kg
    if not 0.0 < link_mass < total_leg_mass:
        raise InfeasibleInertiaError(
            f"hip inertia {stretched_hip_inertia} kg m^2 needs {link_mass:.4g} kg of link mass, "
            f"outside (0, {total_leg_mass}) kg"
        )
    m1 = thigh_fraction * link_mass
    m2 = link_mass - m1
    return LegModel(
        base_mass=total_leg_mass - link_mass,
        link_lengths=(l1, l2),
        link_masses=(m1, m2),
        link_com_offsets=(c1, c2),
        link_inertias=(gyration_factor * m1 * l1 * l1, gyration_factor * m2 * l2 * l2),
        **model_fields,
    )


def default_leg_model(**model_fields) -> LegModel:
    """Calibrated default leg; explicit fields override the calibrated ones."""
    lengths = model_fields.pop("link_lengths", LINK_LENGTHS)
    leg = calibrate_mass_distribution(LEG_WEIGHT, STRETCHED_HIP_INERTIA, lengths)
    return leg.replace(**model_fields) if model_fields else leg


@dataclass(frozen=True)
class MotorParams:
    """Drive parameters, all expressed on the joint side of the transmission.

    The hip motor constant is the knee figure scaled by the gear-ratio ratio,
    since both joints use the same motor.
    """

    torque_constant: tuple[float, float] = (1.05, 1.12)  # Nm/A
    motor_constant: tuple[float, float] = (
        KNEE_MOTOR_CONSTANT * GEAR_RATIOS[0] / GEAR_RATIOS[1],
        KNEE_MOTOR_CONSTANT,
    )
    max_joint_torque: float = MAX_JOINT_TORQUE
    max_joint_speed: float = MAX_JOINT_SPEED
    torque_resolution: float = TORQUE_RESOLUTION
    static_torque_error: float = STATIC_TORQUE_ERROR
    current_loop_bandwidth: float = 1000.0  # Hz
    bus_voltage: float = BUS_VOLTAGE
    electronics_power: float = 9.0  # W
    regen_efficiency: float = 1.0
    quantize: bool = False
    static_offset: bool = False

    @property
    def time_constant(self) -> float:
        if math.isinf(self.current_loop_bandwidth):
            return 0.0
        return 1.0 / (2.0 * math.pi * self.current_loop_bandwidth)


def compute_cable_stiffness(
    youngs_modulus: float,
    cross_section: float,
    free_length: float,
    pulley_radius: float,
    strands: int = 2,
) -> float:
    """Torsional stiffness at the output pulley, ``strands * (E A / L) * r**2``.

    An antagonistic pretensioned pair counts as two strands: one side loads
    while the other unloads.
    """
    args = dict(
        youngs_modulus=youngs_modulus,
        cross_section=cross_section,
        free_length=free_length,
        pulley_radius=pulley_radius,
        strands=strands,
    )
    bad = [name for name, value in args.items() if not value > 0]
    if bad:
        raise ValueError(f"cable parameters must be positive: {', '.join(bad)}")
    return strands * youngs_modulus * cross_section / free_length * pulley_radius**2


# Default geometry: 2 mm synthetic rope on a 50 mm output pulley. The free
# length is chosen so the antagonistic pair gives the published 1614 Nm/rad.
_CABLE_E = 2.0e10
_CABLE_A = math.pi * 1.0e-3**2
_CABLE_R_OUT = 0.05
_CABLE_L = 2 * _CABLE_E * _CABLE_A * _CABLE_R_OUT**2 / CABLE_STIFFNESS


@dataclass(frozen=True)
class CableParams:
    youngs_modulus: float | None = _CABLE_E
    cable_cross_section: float | None = _CABLE_A
    free_length: float | None = _CABLE_L
    pulley_radius_in: float | None = _CABLE_R_OUT / GEAR_RATIOS[0]
    pulley_radius_out: float | None = _CABLE_R_OUT
    strand_count: int = 2
    torsional_stiffness: float = CABLE_STIFFNESS
    torsional_damping: float = 1.7

    def has_geometry(self) -> bool:
        return None not in (
            self.youngs_modulus,
            self.cable_cross_section,
            self.free_length,
            self.pulley_radius_out,
        )

    def geometric_stiffness(self) -> float:
        return compute_cable_stiffness(
            self.youngs_modulus,
            self.cable_cross_section,
            self.free_length,
            self.pulley_radius_out,
            self.strand_count,
        )


@dataclass
class Check:
    name: str
    passed: bool
    message: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, message: str) -> None:
        self.checks.append(Check(name, bool(passed), message))

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.message}" for c in self.checks]
        lines.append(f"{sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def _close(a: float, b: float, rel: float) -> bool:
    return abs(a - b) <= rel * abs(b)


def validate(
    model: LegModel,
    motors: MotorParams | None = None,
    cable: CableParams | None = None,
) -> ValidationReport:
    """Check parameters against the hardware parameter table."""
    motors = motors or MotorParams()
    cable = cable or CableParams()
    report = ValidationReport()

    values = [model.base_mass, model.foot_radius, model.gravity]
    for pair in (model.link_lengths, model.link_masses, model.link_com_offsets,
                 model.link_inertias, model.rotor_inertias):
        values.extend(pair)
    positive = all(v > 0 for v in values) and model.payload_mass >= 0
    report.add("positive parameters", positive, "masses, lengths, inertias strictly positive")
    report.add(
        "gear ratios",
        all(n >= 1 for n in model.gear_ratios) and all(
            _close(n, ref, 1e-9) for n, ref in zip(model.gear_ratios, GEAR_RATIOS)
        ),
        f"gear ratios {model.gear_ratios}, hardware table {GEAR_RATIOS}",
    )
    report.add(
        "leg weight",
        _close(model.leg_mass, LEG_WEIGHT, 1e-9),
        f"leg mass {model.leg_mass:.4f} kg, hardware table Weight {LEG_WEIGHT} kg",
    )
    report.add(
        "link lengths",
        all(_close(a, b, 1e-9) for a, b in zip(model.link_lengths, LINK_LENGTHS)),
        f"link lengths {model.link_lengths} m, hardware table Link lengths 24, 25 cm",
    )
    inertia = model.stretched_hip_inertia()
    report.add(
        "leg inertia",
        _close(inertia, STRETCHED_HIP_INERTIA, 0.01),
        f"stretched hip inertia {inertia:.5f} kg m^2, hardware table Leg inertia {STRETCHED_HIP_INERTIA} kg m^2 (1%)",
    )
    length = model.hip_offset + sum(model.link_lengths)
    report.add(
        "stretched length",
        _close(length, STRETCHED_LENGTH, 1e-9),
        f"base-to-foot length {length:.4f} m, expected {STRETCHED_LENGTH} m",
    )

    report.add(
        "motor constant",
        all(k > 0 and math.isfinite(k) for k in motors.motor_constant)
        and _close(motors.motor_constant[1], KNEE_MOTOR_CONSTANT, 1e-9),
        f"knee motor constant {motors.motor_constant[1]} Nm/sqrt(W), hardware table Torque constant {KNEE_MOTOR_CONSTANT}",
    )
    report.add(
        "max torque",
        0 < motors.max_joint_torque <= MAX_JOINT_TORQUE,
        f"max joint torque {motors.max_joint_torque} Nm, hardware table Max. torque {MAX_JOINT_TORQUE} Nm",
    )
    report.add(
        "max speed",
        0 < motors.max_joint_speed <= MAX_JOINT_SPEED,
        f"max joint speed {motors.max_joint_speed} rad/s, hardware table Max. joint speed {MAX_JOINT_SPEED} rad/s",
    )
    report.add(
        "torque resolution",
        motors.torque_resolution >= 0,
        f"torque resolution {motors.torque_resolution} Nm, hardware table {TORQUE_RESOLUTION} Nm",
    )
    report.add(
        "regeneration efficiency",
        0.0 <= motors.regen_efficiency <= 1.0 and motors.electronics_power >= 0,
        f"regen efficiency {motors.regen_efficiency} in [0, 1], electronics power {motors.electronics_power} W >= 0",
    )

    report.add(
        "cable stiffness",
        cable.torsional_stiffness > 0 and cable.torsional_damping >= 0,
        f"k_c {cable.torsional_stiffness} Nm/rad > 0, d_c {cable.torsional_damping} Nm s/rad >= 0",
    )
    if cable.has_geometry():
        try:
            k_geo = cable.geometric_stiffness()
            consistent = _close(cable.torsional_stiffness, k_geo, 1e-9)
        except ValueError:
            k_geo, consistent = float("nan"), False
        report.add(
            "cable geometry",
            consistent,
            f"k_c {cable.torsional_stiffness:.6g} vs geometry {k_geo:.6g} Nm/rad",
        )
    return report
