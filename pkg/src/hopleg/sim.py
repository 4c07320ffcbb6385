"""Fixed-step closed-loop simulation of the leg, drives and ground.

The rotors are separate bodies coupled to the joints through the cable
spring-damper; the rigid-body part uses the links-only mass matrix. Each step
runs controller (at its own rate) -> current loop -> cable -> contact ->
forward dynamics -> integration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from hopleg import dynamics as dyn
from hopleg.contact import GroundModel, normal_tangential
from hopleg.control import ControllerConfig, HopController, Phase
from hopleg.model import CableParams, LegModel, MotorParams, default_leg_model
from hopleg.powertrain import EnergyLedger, EnergyReport, energy_report, power_channels

CSV_COLUMNS = (
    "t", "z_b", "phi_hfe", "phi_kfe", "zd_b", "phid_hfe", "phid_kfe",
    "tau_hfe", "tau_kfe", "defl_hfe", "defl_kfe", "fc_x", "fc_z", "phase",
    "P_b", "P_J", "P_mech", "P_e", "P_recup",
)
INTEGRATORS = ("semi-implicit-euler", "rk4")
KINDS = ("standing", "longevity", "highjump")


class SimulationInstability(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    duration: float = 5.0
    integrator: str = "semi-implicit-euler"
    rail_viscous_friction: float = 2.0  # N s/m
    decimation: int = 10
    seed: int = 0
    speed_guard_factor: float = 10.0

    def validate(self) -> list[str]:
        errors = []
        if not self.dt > 0:
            errors.append("sim.dt must be positive")
        if not self.duration >= self.dt:
            errors.append("sim.duration must be at least one step")
        if self.decimation < 1:
            errors.append("sim.decimation must be >= 1")
        if self.integrator not in INTEGRATORS:
            errors.append(f"sim.integrator must be one of {INTEGRATORS}")
        if self.rail_viscous_friction < 0:
            errors.append("sim.rail_viscous_friction must be nonnegative")
        return errors


@dataclass(frozen=True)
class ScenarioConfig:
    """Experiment definition: initial condition, schedule and termination."""

    kind: str = "longevity"
    initial_joints: tuple[float, float] = (-0.8, 1.6)
    initial_clearance: float = 0.0  # m, foot bottom above ground at t=0
    initial_velocity: float = 0.0  # m/s, base
    perturbation: float = 0.0  # m/s, uniform noise on the initial base velocity
    initial_phase: str = "stance"
    max_apexes: int = 0  # stop after this many apexes (0: run to duration)
    launch_time: float = -1.0  # s, < 0 disables the launch schedule
    launch_target: float = 0.9  # m
    launch_k_s: float = 2500.0
    launch_d_s: float = 0.0
    launch_ramp: float = 0.0  # s, linear blend from the rest target to the launch target
    target_initial_height: bool = False  # rest target = initial base height
    warmup_hops: int = 5

    def validate(self) -> list[str]:
        errors = []
        if self.kind not in KINDS:
            errors.append(f"scenario.kind must be one of {KINDS}")
        if self.initial_phase not in ("stance", "flight"):
            errors.append("scenario.initial_phase must be 'stance' or 'flight'")
        if self.max_apexes < 0 or self.warmup_hops < 0:
            errors.append("scenario.max_apexes and scenario.warmup_hops must be nonnegative")
        if self.perturbation < 0 or self.launch_ramp < 0:
            errors.append("scenario.perturbation and scenario.launch_ramp must be nonnegative")
        return errors


@dataclass(frozen=True)
class Scenario:
    model: LegModel = field(default_factory=default_leg_model)
    motors: MotorParams = field(default_factory=MotorParams)
    cable: CableParams = field(default_factory=CableParams)
    ground: GroundModel = field(default_factory=GroundModel)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)


@dataclass
class WorldState:
    """Full simulator state. Rotor angles and speeds are joint side."""

    t: float
    q: np.ndarray
    qd: np.ndarray
    rotor: np.ndarray
    rotor_d: np.ndarray
    motor_torque: np.ndarray
    command: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def copy(self) -> "WorldState":
        return WorldState(self.t, self.q.copy(), self.qd.copy(), self.rotor.copy(), self.rotor_d.copy(),
                          self.motor_torque.copy(), self.command.copy())


@dataclass
class TrajectoryRecord:
    columns: dict
    contact: np.ndarray
    foot_z: np.ndarray
    apexes: list  # (t, z_b) at full rate

    def __len__(self) -> int:
        return len(self.columns["t"])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        cols = [self.columns[c] for c in CSV_COLUMNS]
        for row in zip(*cols):
            w.writerow([f"{v:.12g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass
class SimResult:
    record: TrajectoryRecord
    report: EnergyReport
    metrics: dict
    final: WorldState
    work: dict


class _Recorder:
    def __init__(self):
        self.rows = {c: [] for c in CSV_COLUMNS}
        self.contact = []
        self.foot_z = []

    def add(self, t, x, tau, fx, fz, phase, ps, contact, foot_z):
        r = self.rows
        r["t"].append(t)
        r["z_b"].append(x[0]); r["phi_hfe"].append(x[1]); r["phi_kfe"].append(x[2])
        r["zd_b"].append(x[5]); r["phid_hfe"].append(x[6]); r["phid_kfe"].append(x[7])
        r["tau_hfe"].append(tau[0]); r["tau_kfe"].append(tau[1])
        r["defl_hfe"].append(x[3] - x[1]); r["defl_kfe"].append(x[4] - x[2])
        r["fc_x"].append(fx); r["fc_z"].append(fz)
        r["phase"].append(phase)
        r["P_b"].append(ps.P_b); r["P_J"].append(ps.P_J); r["P_mech"].append(ps.P_mech)
        r["P_e"].append(ps.P_e); r["P_recup"].append(ps.P_recup)
        self.contact.append(contact)
        self.foot_z.append(foot_z)

    def finish(self, apexes) -> TrajectoryRecord:
        cols = {c: np.asarray(v, dtype=float) for c, v in self.rows.items()}
        return TrajectoryRecord(cols, np.asarray(self.contact, dtype=bool), np.asarray(self.foot_z), apexes)


class World:
    """Stepping engine for one scenario. State x is
    (z, a1, a2, r1, r2, zd, a1d, a2d, r1d, r2d) with joint-side rotor angles r.
    """

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.p = dyn.params(scn.model)
        self.jr = scn.model.reflected_rotor_inertias
        self.k = scn.cable.torsional_stiffness
        self.d = scn.cable.torsional_damping
        self.rail = scn.sim.rail_viscous_friction
        self.g = scn.ground

    def accel(self, x, tau_m):
        """Accelerations and the quantities the step needs for bookkeeping."""
        p, g = self.p, self.g
        z, a1, a2, r1, r2, zd, a1d, a2d, r1d, r2d = x
        fx_pos, fz_pos, xd, zfd, jx1, jx2, jz1, jz2 = dyn.foot_kinematics(p, z, a1, a2, zd, a1d, a2d)
        pen = g.ground_height + p.rf - fz_pos
        fx, fz = normal_tangential(g, pen, xd, zfd)
        t1 = self.k * (r1 - a1) + self.d * (r1d - a1d)
        t2 = self.k * (r2 - a2) + self.d * (r2d - a2d)
        m = dyn.mass_entries(p, a1, a2, False)
        (b0, b1, b2), (g0, g1, g2) = dyn.bias_entries(p, a1, a2, a1d, a2d)
        zdd, a1dd, a2dd = dyn.solve3(
            *m,
            fz - b0 - g0 - self.rail * zd,
            jx1 * fx + jz1 * fz + t1 - b1 - g1,
            jx2 * fx + jz2 * fz + t2 - b2 - g2,
        )
        r1dd = (tau_m[0] - t1) / self.jr[0]
        r2dd = (tau_m[1] - t2) / self.jr[1]
        powers = (
            tau_m[0] * r1d + tau_m[1] * r2d,  # motors
            fx * xd + fz * zfd,  # contact
            -self.rail * zd * zd,  # rail
            -self.d * ((r1d - a1d) ** 2 + (r2d - a2d) ** 2),  # cable damping
        )
        return (zdd, a1dd, a2dd, r1dd, r2dd), (fx, fz, pen, t1, t2, fz_pos), powers

    def deriv(self, x, tau_m):
        acc, _, powers = self.accel(x, tau_m)
        return (*x[5:], *acc, *powers)

    def mechanical_energy(self, x) -> float:
        """Rigid bodies (kinetic + gravity), rotors and cable springs."""
        z, a1, a2, r1, r2, zd, a1d, a2d, r1d, r2d = x
        model = self.scn.model
        e = dyn.kinetic_energy((z, a1, a2), (zd, a1d, a2d), model, include_rotors=False)
        e += dyn.potential_energy((z, a1, a2), model)
        e += 0.5 * (self.jr[0] * r1d * r1d + self.jr[1] * r2d * r2d)
        e += 0.5 * self.k * ((r1 - a1) ** 2 + (r2 - a2) ** 2)
        return e


def initial_state(scn: Scenario) -> WorldState:
    """Foot placed ``initial_clearance`` above the ground at the initial joint angles.

    Rotors are pre-deflected to carry the first controller command and the
    current loop starts settled on it.
    """
    model, sc = scn.model, scn.scenario
    a1, a2 = sc.initial_joints
    _, foot_z = dyn.foot_position((0.0, a1, a2), model)
    z0 = scn.ground.ground_height + model.foot_radius + sc.initial_clearance - foot_z
    zd0 = sc.initial_velocity
    if sc.perturbation:
        rng = np.random.default_rng(scn.sim.seed)
        zd0 += rng.uniform(-sc.perturbation, sc.perturbation)
    q = np.array([z0, a1, a2])
    qd = np.array([zd0, 0.0, 0.0])
    return WorldState(0.0, q, qd, q[1:].copy(), np.zeros(2), np.zeros(2))


def _shape(cmd, motors: MotorParams):
    if motors.static_offset:
        cmd += motors.static_torque_error
    if motors.quantize and motors.torque_resolution > 0:
        cmd = round(cmd / motors.torque_resolution) * motors.torque_resolution
    lim = motors.max_joint_torque
    return lim if cmd > lim else -lim if cmd < -lim else cmd


def run(scn: Scenario, state: WorldState | None = None, controller=None, record: bool = True) -> SimResult:
    """Integrate ``scn`` from ``state`` (default: :func:`initial_state`).

    ``controller`` is any object with ``update(q, qd, contact, dt) -> torques``
    and an optional ``state.phase``; the default is the hopping controller,
    and ``False`` applies zero torque.
    """
    errors = scn.sim.validate() + scn.scenario.validate() + scn.controller.validate(scn.model)
    if errors:
        raise ValueError("; ".join(errors))
    st = (state or initial_state(scn)).copy()
    if scn.scenario.target_initial_height:
        scn = replace(scn, controller=replace(scn.controller, z_target=float(st.q[0])))
    sim, motors, sc = scn.sim, scn.motors, scn.scenario
    world = World(scn)
    if controller is None:
        phase = Phase(sc.initial_phase)
        controller = _ScheduledController(scn, phase)
    dt = sim.dt
    n_steps = int(round(sim.duration / dt))
    ctrl_div = max(1, int(round(1.0 / (scn.controller.rate * dt))))
    dt_ctrl = ctrl_div * dt
    tc = motors.time_constant
    decay = math.exp(-dt / tc) if tc > 0 else 0.0
    lim = motors.max_joint_torque
    speed_guard = sim.speed_guard_factor * motors.max_joint_speed
    rk4 = sim.integrator == "rk4"

    x = [*st.q, *st.rotor, *st.qd, *st.rotor_d]
    tau_m = list(st.motor_torque)
    cmd = list(st.command)
    ledger = EnergyLedger()
    rec = _Recorder()
    apexes = []
    work = [0.0, 0.0, 0.0, 0.0]
    peak_tau = peak_trans = peak_speed = 0.0
    contact_changes = 0
    prev_contact = None
    prev_zd = x[5]
    prev_z = x[0]
    t = st.t

    if state is None and controller is not False:
        # start with the rotors already carrying the first command
        q, qd = np.array(x[:3]), np.array(x[5:8])
        acc, aux, _ = world.accel(x, tau_m)
        first = controller.update(q, qd, aux[2] >= 0.0, dt_ctrl, t)
        cmd = [float(first[0]), float(first[1])]
        tau_m = [_shape(c, motors) for c in cmd]
        x[3] = x[1] + tau_m[0] / world.k
        x[4] = x[2] + tau_m[1] / world.k
    e_start = world.mechanical_energy(x)

    for i in range(n_steps):
        acc, aux, powers = world.accel(x, tau_m)
        fx, fz, pen, t1, t2, foot_z = aux
        contact = pen >= 0.0
        if prev_contact is not None and contact != prev_contact:
            contact_changes += 1
        prev_contact = contact

        if controller is not False and i % ctrl_div == 0 and i > 0:
            out = controller.update(np.array(x[:3]), np.array(x[5:8]), contact, dt_ctrl, t)
            cmd = [float(out[0]), float(out[1])]
        for j in (0, 1):
            target = _shape(cmd[j], motors) if controller is not False else 0.0
            v = target + (tau_m[j] - target) * decay
            tau_m[j] = lim if v > lim else -lim if v < -lim else v
        acc, aux, powers = world.accel(x, tau_m)
        fx, fz, pen, t1, t2, foot_z = aux

        ps = power_channels(tau_m, (x[8], x[9]), motors)
        ledger.add(ps, dt)
        phase = getattr(getattr(controller, "state", None), "phase", Phase.FLIGHT)
        if record and i % sim.decimation == 0:
            rec.add(t, x, tau_m, fx, fz, 1.0 if phase is Phase.STANCE else 0.0, ps, contact,
                    foot_z - world.p.rf)

        peak_tau = max(peak_tau, abs(tau_m[0]), abs(tau_m[1]))
        peak_trans = max(peak_trans, abs(t1), abs(t2))
        peak_speed = max(peak_speed, abs(x[6]), abs(x[7]))

        if rk4:
            x = _rk4(world, x, tau_m, dt, work)
        else:
            for j in range(5):
                x[5 + j] += acc[j] * dt
            for j in range(5):
                x[j] += x[5 + j] * dt
            for j in range(4):
                work[j] += powers[j] * dt
        t = st.t + (i + 1) * dt

        zd = x[5]
        if not contact and phase is Phase.FLIGHT and prev_zd > 0.0 >= zd:
            apexes.append((t - dt, float(prev_z)) if prev_z >= x[0] else (t, float(x[0])))
            if sc.max_apexes and len(apexes) >= sc.max_apexes:
                break
        prev_zd, prev_z = zd, x[0]

        if not all(map(math.isfinite, x)) or max(abs(x[5 + j]) for j in range(5)) > speed_guard:
            raise SimulationInstability(
                f"state left sanity bounds at t={t:.4f}s: q=({x[0]:.4g}, {x[1]:.4g}, {x[2]:.4g}) "
                f"qd=({x[5]:.4g}, {x[6]:.4g}, {x[7]:.4g}) rotor speed=({x[8]:.4g}, {x[9]:.4g})"
            )

    final = WorldState(t, np.array(x[:3]), np.array(x[5:8]), np.array(x[3:5]), np.array(x[8:10]),
                       np.array(tau_m), np.array(cmd))
    work_d = {
        "motors": float(work[0]), "contact": float(work[1]), "rail": float(work[2]),
        "cable_damping": float(work[3]),
        "energy_start": float(e_start), "energy_end": float(world.mechanical_energy(x)),
    }
    report = energy_report(ledger)
    record_out = rec.finish(apexes)
    metrics = {
        "peak_motor_torque": float(peak_tau),
        "peak_transmitted_torque": float(peak_trans),
        "peak_joint_speed": float(peak_speed),
        "contact_changes": contact_changes,
        "apex_count": len(apexes),
        "cable_resonance_hz": cable_resonance(scn),
    }
    metrics.update(hop_metrics(record_out, sc.warmup_hops))
    rest = getattr(controller, "rest_height", float("nan"))
    metrics["rest_height"] = rest
    metrics["apex_above_rest"] = metrics["max_apex"] - rest if len(apexes) else float("nan")
    if len(record_out):
        tail = record_out.columns["t"] >= t - 0.2
        metrics["settled_height"] = float(np.mean(record_out.columns["z_b"][tail]))
        metrics["settled_normal_force"] = float(np.mean(record_out.columns["fc_z"][tail]))
    metrics["simulated_time"] = t
    return SimResult(record_out, report, metrics, final, work_d)


def _rk4(world: World, x, tau_m, dt, work):
    f = world.deriv
    k1 = f(x, tau_m)
    x2 = [a + 0.5 * dt * b for a, b in zip(x, k1)]
    k2 = f(x2, tau_m)
    x3 = [a + 0.5 * dt * b for a, b in zip(x, k2)]
    k3 = f(x3, tau_m)
    x4 = [a + dt * b for a, b in zip(x, k3)]
    k4 = f(x4, tau_m)
    inc = [dt / 6.0 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    for j in range(4):
        work[j] += inc[10 + j]
    return [a + b for a, b in zip(x, inc[:10])]


class _ScheduledController(HopController):
    """Hopping controller with the optional launch schedule of a scenario.

    Before ``launch_time`` the base target stays at its rest value. From the
    launch until the first lift-off the launch target and gains apply; after
    that the regular configuration takes over again.
    """

    def __init__(self, scn: Scenario, phase: Phase):
        super().__init__(scn.controller, scn.model, phase)
        self.base_config = scn.controller
        sc = scn.scenario
        self.launch_time = sc.launch_time
        self.launch_ramp = sc.launch_ramp
        self.launch_config = replace(scn.controller, z_target=sc.launch_target, k_s=sc.launch_k_s,
                                     d_s=sc.launch_d_s)
        self.launched = False
        self.lifted = False
        self.rest_height = float("nan")

    def update(self, q, qd, contact, dt, t=0.0):
        if self.launch_time >= 0 and not self.launched and t >= self.launch_time:
            self.launched = True
            self.rest_height = float(q[0])
            self.config = self.launch_config
        if self.launched and not self.lifted:
            if self.state.phase is Phase.FLIGHT:
                self.lifted = True
                self.config = self.base_config
            elif self.launch_ramp > 0:
                s = min(1.0, (t - self.launch_time) / self.launch_ramp)
                lc, bc = self.launch_config, self.base_config
                self.config = replace(lc, z_target=bc.z_target + s * (lc.z_target - bc.z_target))
        return super().update(q, qd, contact, dt)


def cable_resonance(scn: Scenario) -> float:
    """Highest rotor-against-joint cable mode in Hz, links held at the flight pose."""
    model = scn.model
    q = (0.5, *scn.controller.q_flight)
    M = dyn.mass_matrix(q, model, include_rotors=False)
    jr = model.reflected_rotor_inertias
    k = scn.cable.torsional_stiffness
    # generalized eigenproblem on (joints + rotors), base free
    n = 5
    K = np.zeros((n, n))
    for j in range(2):
        a, r = 1 + j, 3 + j
        K[a, a] += k; K[r, r] += k; K[a, r] -= k; K[r, a] -= k
    Mf = np.zeros((n, n))
    Mf[:3, :3] = M
    Mf[3, 3], Mf[4, 4] = jr
    w2 = np.linalg.eigvals(np.linalg.solve(Mf, K)).real
    return float(math.sqrt(max(w2)) / (2 * math.pi))


def apex_detector(record: TrajectoryRecord) -> list[tuple[float, float]]:
    """Flight samples where the base velocity turns from rising to falling."""
    t, z, zd = record.columns["t"], record.columns["z_b"], record.columns["zd_b"]
    if len(t) == 0:
        raise ValueError("empty record")
    flight = ~record.contact
    out = []
    for i in range(1, len(t)):
        if flight[i] and flight[i - 1] and zd[i - 1] > 0.0 >= zd[i]:
            k = i - 1 if z[i - 1] >= z[i] else i
            out.append((float(t[k]), float(z[k])))
    return out


def hop_metrics(record: TrajectoryRecord, warmup: int = 5) -> dict:
    """Per-hop base excursion and foot clearance averaged after ``warmup`` hops."""
    if len(record) == 0:
        nan = float("nan")
        heights = [a[1] for a in record.apexes or []]
        return {"hops": len(heights), "apex_heights": heights, "max_apex": max(heights, default=nan),
                "base_height_change": nan, "foot_clearance": nan, "flights": 0}
    t, z = record.columns["t"], record.columns["z_b"]
    contact = record.contact
    apexes = record.apexes if record.apexes is not None else apex_detector(record)
    changes, clearances = [], []
    idx = np.searchsorted(t, [a[0] for a in apexes])
    for n in range(len(apexes) - 1):
        lo, hi = idx[n], idx[n + 1]
        changes.append(apexes[n][1] - float(np.min(z[lo:hi])))
    # foot clearance: highest foot point in each contact-free stretch
    edges = np.flatnonzero(np.diff(contact.astype(int)))
    for s, e in zip(edges[:-1], edges[1:]):
        if not contact[s + 1]:
            clearances.append(float(np.max(record.foot_z[s + 1:e + 1])))
    use_c = changes[warmup:] or changes
    use_f = clearances[warmup:] or clearances
    return {
        "hops": len(apexes),
        "apex_heights": [a[1] for a in apexes],
        "max_apex": max((a[1] for a in apexes), default=float("nan")),
        "base_height_change": float(np.mean(use_c)) if use_c else float("nan"),
        "foot_clearance": float(np.mean(use_f)) if use_f else float("nan"),
        "flights": len(clearances),
    }
