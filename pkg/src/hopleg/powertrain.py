"""Current loop, cable transmission, test-bench model and power accounting.

All torques and rotor angles are joint side unless a name says otherwise; a
rotor angle on the motor side is the joint-side value times the gear ratio.
"""

from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from hopleg.model import CableParams, LegModel, MotorParams

# Hardware figures from the longevity experiment, for side-by-side reporting.
REFERENCE_LONGEVITY = {
    "positive_work_W": 28.83,
    "negative_work_W": 27.85,
    "joule_W": 14.04,
    "battery_W": 25.12,
    "recuperation_rate": 0.965,
}


def _quantize(value, resolution):
    if resolution <= 0:
        return value
    return np.round(np.asarray(value) / resolution) * resolution


def shape_command(command, motors: MotorParams):
    """Command as realised by the drive: offset, quantized, then clamped."""
    cmd = np.asarray(command, dtype=float)
    if motors.static_offset:
        cmd = cmd + motors.static_torque_error
    if motors.quantize:
        cmd = _quantize(cmd, motors.torque_resolution)
    return np.clip(cmd, -motors.max_joint_torque, motors.max_joint_torque)


def current_loop_step(command, actual, dt: float, motors: MotorParams):
    """Advance the first-order current loop by ``dt``.

    The lag is integrated exactly, so any ``dt`` is stable. An infinite
    bandwidth returns the shaped command directly.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    target = shape_command(command, motors)
    tc = motors.time_constant
    if tc == 0.0:
        return target
    decay = math.exp(-dt / tc)
    out = target + (np.asarray(actual, dtype=float) - target) * decay
    return np.clip(out, -motors.max_joint_torque, motors.max_joint_torque)


def transmission_torque(rotor_angle, rotor_speed, joint_angle, joint_speed, cable: CableParams, ratio=1.0):
    """Torque the cable applies to the joint.

    ``rotor_angle`` and ``rotor_speed`` are motor side when ``ratio`` is the
    gear ratio, joint side when it is 1.
    """
    deflection = np.asarray(rotor_angle) / ratio - np.asarray(joint_angle)
    rate = np.asarray(rotor_speed) / ratio - np.asarray(joint_speed)
    return cable.torsional_stiffness * deflection + cable.torsional_damping * rate


@dataclass
class PowertrainState:
    """Per-joint drive state (hip, knee)."""

    rotor_angle: np.ndarray  # rad, motor side
    rotor_speed: np.ndarray  # rad/s, motor side
    commanded_torque: np.ndarray  # Nm
    motor_torque: np.ndarray  # Nm, actual, after the current loop
    deflection: np.ndarray  # rad
    transmitted_torque: np.ndarray  # Nm

    @classmethod
    def from_joint_side(cls, rotor_angle, rotor_speed, joint_angle, joint_speed, command, motor_torque,
                        cable: CableParams, ratios) -> "PowertrainState":
        ratios = np.asarray(ratios, dtype=float)
        rotor_angle = np.asarray(rotor_angle, dtype=float)
        rotor_speed = np.asarray(rotor_speed, dtype=float)
        return cls(
            rotor_angle=rotor_angle * ratios,
            rotor_speed=rotor_speed * ratios,
            commanded_torque=np.asarray(command, dtype=float),
            motor_torque=np.asarray(motor_torque, dtype=float),
            deflection=rotor_angle - np.asarray(joint_angle),
            transmitted_torque=transmission_torque(rotor_angle, rotor_speed, joint_angle, joint_speed, cable),
        )


# Test bench ------------------------------------------------------------------


@dataclass(frozen=True)
class TestBench:
    """One actuator with its output pulley held by a rigid torque sensor.

    With the output clamped, only the rotor inertia (seen at the joint) moves:
    the cable spring-damper and the current loop form a linear third-order
    system whose output is the torque read by the sensor.
    """

    __test__ = False

    rotor_inertia: float = 8.0e-4 * 5.0**2  # kg m^2, joint side
    stiffness: float = 1614.0
    damping: float = 1.7
    bandwidth: float = 1000.0  # Hz
    max_torque: float = 70.0
    resolution: float = 0.07
    quantize: bool = False

    @classmethod
    def from_model(cls, model: LegModel, cable: CableParams, motors: MotorParams, joint: int = 0,
                   **changes) -> "TestBench":
        fields = dict(
            rotor_inertia=model.reflected_rotor_inertias[joint],
            stiffness=cable.torsional_stiffness,
            damping=cable.torsional_damping,
            bandwidth=motors.current_loop_bandwidth,
            max_torque=motors.max_joint_torque,
            resolution=motors.torque_resolution,
        )
        fields.update(changes)
        return cls(**fields)

    @property
    def time_constant(self) -> float:
        return 0.0 if math.isinf(self.bandwidth) else 1.0 / (2.0 * math.pi * self.bandwidth)

    @property
    def natural_frequency(self) -> float:
        """Undamped cable resonance in Hz."""
        return math.sqrt(self.stiffness / self.rotor_inertia) / (2.0 * math.pi)

    @property
    def damping_ratio(self) -> float:
        return self.damping / (2.0 * math.sqrt(self.stiffness * self.rotor_inertia))

    def state_space(self):
        """(A, B, C, D) with the state (motor torque, deflection, deflection rate).

        Without a current-loop lag the motor torque state is dropped.
        """
        J, k, d = self.rotor_inertia, self.stiffness, self.damping
        mech = np.array([[0.0, 1.0], [-k / J, -d / J]])
        if self.time_constant == 0.0:
            A = mech
            B = np.array([[0.0], [1.0 / J]])
            C = np.array([[k, d]])
        else:
            tc = self.time_constant
            A = np.zeros((3, 3))
            A[0, 0] = -1.0 / tc
            A[1:, 1:] = mech
            A[2, 0] = 1.0 / J
            B = np.array([[1.0 / tc], [0.0], [0.0]])
            C = np.array([[0.0, k, d]])
        return A, B, C

    def discretize(self, dt: float):
        """Exact zero-order-hold transition over one step."""
        A, B, C = self.state_space()
        n = A.shape[0]
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = A
        aug[:n, n:] = B
        E = expm(aug * dt)
        return E[:n, :n], E[:n, n], C[0]

    def transfer(self, freq_hz):
        """Sensor torque over commanded torque at ``freq_hz``."""
        s = 2j * math.pi * np.asarray(freq_hz, dtype=float)
        J, k, d = self.rotor_inertia, self.stiffness, self.damping
        return (d * s + k) / (J * s * s + d * s + k) / (self.time_constant * s + 1.0)

    def simulate(self, command: np.ndarray, dt: float) -> np.ndarray:
        """Sensor torque at each sample for a piecewise-constant command."""
        phi, gamma, c = self.discretize(dt)
        u = np.clip(np.asarray(command, dtype=float), -self.max_torque, self.max_torque)
        if self.quantize:
            u = _quantize(u, self.resolution)
        x = np.zeros(phi.shape[0])
        out = np.empty(u.size)
        for i, ui in enumerate(u):
            out[i] = c @ x
            x = phi @ x + gamma * ui
        return out


@dataclass
class StepResponse:
    t: np.ndarray
    command: np.ndarray
    measured: np.ndarray

    def steady_state_error(self, window: float = 0.2) -> float:
        """Relative error of the mean sensor torque over the final ``window`` fraction."""
        level = self.command[-1]
        if level == 0:
            return float(np.max(np.abs(self.measured)))
        tail = self.measured[int(len(self.measured) * (1.0 - window)):]
        return abs(float(np.mean(tail)) - level) / abs(level)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "command", "measured"])
            for row in zip(self.t, self.command, self.measured):
                w.writerow([f"{v:.12g}" for v in row])


def testbench_step_response(command: float, duration: float = 0.5, dt: float = 1e-4,
                            bench: TestBench | None = None) -> StepResponse:
    if dt <= 0 or duration <= 0:
        raise ValueError("dt and duration must be positive")
    bench = bench or TestBench()
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    cmd = np.full(n, float(command))
    return StepResponse(t, cmd, bench.simulate(cmd, dt))


@dataclass
class SweepPoint:
    freq: float
    amplitude: float
    measured_amplitude: float
    gain: float
    phase_deg: float


def _fit_sinusoid(t, y, freq):
    w = 2.0 * math.pi * freq
    basis = np.column_stack([np.sin(w * t), np.cos(w * t), np.ones_like(t)])
    (a, b, _), *_ = np.linalg.lstsq(basis, y, rcond=None)
    return math.hypot(a, b), math.atan2(b, a)


def testbench_freq_sweep(amplitude: float, freqs, cycles: int = 5, bench: TestBench | None = None,
                         dt: float = 1e-4, settle_time: float = 0.4) -> list[SweepPoint]:
    """Drive sinusoidal torque commands and fit gain and phase of the sensor torque.

    Each frequency runs ``settle_time`` seconds plus ``cycles`` periods; the fit
    uses the final ``cycles`` periods only. A 0 Hz entry is a constant command.
    """
    bench = bench or TestBench()
    freqs = list(freqs)
    if not freqs:
        raise ValueError("frequency list is empty")
    if abs(amplitude) > bench.max_torque:
        raise ValueError(f"amplitude {amplitude} Nm exceeds the {bench.max_torque} Nm limit")
    points = []
    for f in freqs:
        if f == 0:
            resp = testbench_step_response(amplitude, settle_time + 0.1, dt, bench)
            level = float(np.mean(resp.measured[-int(0.1 / dt):]))
            points.append(SweepPoint(0.0, amplitude, level, level / amplitude, 0.0))
            continue
        fit_time = cycles / f
        n = int(round((settle_time + fit_time) / dt)) + 1
        t = np.arange(n) * dt
        y = bench.simulate(amplitude * np.sin(2.0 * math.pi * f * t), dt)
        tail = t >= t[-1] - fit_time
        amp, phase = _fit_sinusoid(t[tail], y[tail], f)
        points.append(SweepPoint(float(f), amplitude, amp, amp / amplitude, math.degrees(phase)))
    return points


def sweep_to_csv(points: list[SweepPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq", "command", "measured", "gain", "phase"])
        for p in points:
            w.writerow([f"{v:.12g}" for v in (p.freq, p.amplitude, p.measured_amplitude, p.gain, p.phase_deg)])


# Power accounting --------------------------------------------------------------


@dataclass
class PowerSample:
    """Instantaneous power channels in W.

    ``P_mech`` is the mechanical output of the motors (positive work only) and
    ``P_neg`` the magnitude of the mechanical power they absorb. ``P_recup`` is
    the share of ``P_neg`` returned to the battery, and the battery power is
    defined by the ledger ``P_b = P_J + P_mech + P_e - P_recup``.
    """

    P_b: float
    P_J: float
    P_mech: float
    P_neg: float
    P_e: float
    P_recup: float
    I_b: float = 0.0


def power_channels(torques, speeds, motors: MotorParams, battery_voltage: float | None = None) -> PowerSample:
    """Power channels for joint-side motor torques and rotor speeds (hip, knee)."""
    p_mech = p_neg = p_joule = 0.0
    for tau, w, km in zip(torques, speeds, motors.motor_constant):
        p = tau * w
        if p >= 0.0:
            p_mech += p
        else:
            p_neg -= p
        p_joule += (tau / km) ** 2
    p_e = motors.electronics_power
    p_recup = motors.regen_efficiency * p_neg
    p_b = p_joule + p_mech + p_e - p_recup
    voltage = battery_voltage or motors.bus_voltage
    return PowerSample(p_b, p_joule, p_mech, p_neg, p_e, p_recup, p_b / voltage)


def power_sample(state: PowertrainState, motors: MotorParams, ratios,
                 battery_voltage: float | None = None) -> PowerSample:
    speeds = np.asarray(state.rotor_speed) / np.asarray(ratios, dtype=float)
    return power_channels(state.motor_torque, speeds, motors, battery_voltage)


CHANNELS = ("P_b", "P_J", "P_mech", "P_neg", "P_e", "P_recup")


@dataclass
class EnergyLedger:
    """Per-step channel energies; totals use exact summation."""

    steps: dict = field(default_factory=lambda: {c: array("d") for c in CHANNELS})
    duration: float = 0.0

    def add(self, sample: PowerSample, dt: float) -> None:
        s = self.steps
        s["P_b"].append(sample.P_b * dt)
        s["P_J"].append(sample.P_J * dt)
        s["P_mech"].append(sample.P_mech * dt)
        s["P_neg"].append(sample.P_neg * dt)
        s["P_e"].append(sample.P_e * dt)
        s["P_recup"].append(sample.P_recup * dt)
        self.duration += dt

    def __len__(self) -> int:
        return len(self.steps["P_b"])

    def energy(self, channel: str) -> float:
        return math.fsum(self.steps[channel])

    def energies(self) -> dict[str, float]:
        return {c: self.energy(c) for c in CHANNELS}


@dataclass
class EnergyReport:
    duration: float
    energy: dict  # J per channel
    average: dict  # W per channel

    @property
    def positive_work(self) -> float:
        return self.energy["P_mech"]

    @property
    def negative_work(self) -> float:
        return self.energy["P_neg"]

    @property
    def recuperation_rate(self) -> float:
        """|negative mechanical work| / positive mechanical work."""
        if self.positive_work <= 0:
            return 0.0
        return self.negative_work / self.positive_work

    @property
    def battery_recuperation_rate(self) -> float:
        """Energy returned to the battery over positive mechanical work."""
        if self.positive_work <= 0:
            return 0.0
        return self.energy["P_recup"] / self.positive_work

    @property
    def mechanical_loss(self) -> float:
        """Positive work not recovered at the battery, J."""
        return self.energy["P_mech"] - self.energy["P_recup"]

    def ledger_residual(self) -> float:
        e = self.energy
        return e["P_b"] - (e["P_J"] + e["P_mech"] + e["P_e"] - e["P_recup"])

    def breakdown(self) -> dict[str, float]:
        """Average powers per channel and each loss channel's share of battery power."""
        e, T = self.energy, self.duration
        losses = {
            "joule": e["P_J"],
            "electronics": e["P_e"],
            "mechanical_loss": self.mechanical_loss,
        }
        total = math.fsum(losses.values())
        out = {
            "battery_W": e["P_b"] / T,
            "joule_W": e["P_J"] / T,
            "electronics_W": e["P_e"] / T,
            "mechanical_loss_W": self.mechanical_loss / T,
            "recuperated_W": e["P_recup"] / T,
            "positive_work_W": e["P_mech"] / T,
            "negative_work_W": e["P_neg"] / T,
        }
        for name, value in losses.items():
            out[f"{name}_fraction"] = value / total if total else 0.0
        return out

    def as_dict(self) -> dict:
        out = {"duration_s": self.duration}
        out.update({f"E_{k}_J": v for k, v in self.energy.items()})
        out.update(self.breakdown())
        out["recuperation_rate"] = self.recuperation_rate
        out["battery_recuperation_rate"] = self.battery_recuperation_rate
        out["reference_recuperation_rate"] = REFERENCE_LONGEVITY["recuperation_rate"]
        return out

    @classmethod
    def from_averages(cls, duration: float, **powers) -> "EnergyReport":
        """Build a report from average channel powers, e.g. published figures.

        Missing ``P_b`` or ``P_e`` is solved from the ledger identity.
        """
        p = dict(powers)
        p.setdefault("P_neg", p.get("P_recup", 0.0))
        if "P_e" not in p:
            p["P_e"] = p["P_b"] - p["P_J"] - p["P_mech"] + p["P_recup"]
        if "P_b" not in p:
            p["P_b"] = p["P_J"] + p["P_mech"] + p["P_e"] - p["P_recup"]
        return cls(duration, {c: p[c] * duration for c in CHANNELS}, {c: p[c] for c in CHANNELS})


def energy_report(history: EnergyLedger) -> EnergyReport:
    if len(history) == 0 or history.duration <= 0:
        raise ValueError("energy history is empty")
    energy = history.energies()
    return EnergyReport(history.duration, energy, {c: v / history.duration for c, v in energy.items()})
