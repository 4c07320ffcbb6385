import dataclasses
import math

import numpy as np
import pytest

from hopleg import dynamics as dyn
from hopleg.config import load_config
from hopleg.sim import (
    CSV_COLUMNS,
    Scenario,
    ScenarioConfig,
    SimConfig,
    SimulationInstability,
    TrajectoryRecord,
    WorldState,
    apex_detector,
    run,
)


def preset(name, *overrides):
    return load_config(preset=name, overrides=overrides).scenario()


def free_state(z, joints=(-0.8, 1.6), zd=0.0, joint_rates=(0.0, 0.0)):
    q = np.array([z, *joints])
    qd = np.array([zd, *joint_rates])
    return WorldState(0.0, q, qd, q[1:].copy(), qd[1:].copy(), np.zeros(2))


def coast(state, duration, dt=1e-4, integrator="semi-implicit-euler", rail=2.0):
    scn = Scenario(sim=SimConfig(dt=dt, duration=duration, integrator=integrator, rail_viscous_friction=rail))
    return run(scn, state, controller=False, record=False)


def test_one_ballistic_step_by_hand():
    dt, g = 1e-4, 9.81
    res = coast(free_state(2.0), dt)
    # free fall moves every body alike, so the joints stay put
    assert res.final.qd[0] == pytest.approx(-g * dt, rel=1e-12)
    assert res.final.q[0] == pytest.approx(2.0 - g * dt * dt, rel=1e-12)
    np.testing.assert_allclose(res.final.q[1:], [-0.8, 1.6], atol=1e-15)
    np.testing.assert_allclose(res.final.qd[1:], 0.0, atol=1e-12)


def test_resting_stretched_leg_is_an_equilibrium(leg):
    scn = Scenario()
    pen = leg.total_mass * leg.gravity / scn.ground.stiffness
    _, foot_z = dyn.foot_position((0.0, 0.0, 0.0), leg)
    state = free_state(leg.foot_radius - pen - foot_z, joints=(0.0, 0.0))
    for integrator in ("semi-implicit-euler", "rk4"):
        res = coast(state, 1e-4, integrator=integrator)
        np.testing.assert_allclose(res.final.q, state.q, atol=1e-10)
        np.testing.assert_allclose(res.final.qd, 0.0, atol=1e-10)


@pytest.mark.parametrize("integrator,low,high", [("rk4", 10.0, 22.0), ("semi-implicit-euler", 1.6, 2.5)])
def test_convergence_order_on_a_ballistic_arc(integrator, low, high):
    state = free_state(2.0, zd=3.0, joint_rates=(2.0, -3.0))

    def end(dt, method=integrator):
        f = coast(state, 0.5, dt, method).final
        return np.concatenate([f.q, f.qd])

    ref = end(2.5e-5, "rk4")
    e_coarse = np.max(np.abs(end(2e-4) - ref))
    e_fine = np.max(np.abs(end(1e-4) - ref))
    order = 4 if integrator == "rk4" else 1
    assert low <= e_coarse / e_fine <= high, (e_coarse, e_fine, 2**order)


def test_ballistic_apex_height():
    sim = SimConfig(duration=0.5, rail_viscous_friction=0.0, integrator="rk4")
    res = run(Scenario(sim=sim), free_state(2.0, zd=3.0), controller=False)
    (t_apex, z_apex), = res.record.apexes
    assert z_apex - 2.0 == pytest.approx(3.0**2 / (2 * 9.81), abs=1e-6)
    assert t_apex == pytest.approx(3.0 / 9.81, abs=2e-4)


def test_runs_are_deterministic():
    scn = preset("longevity", "sim.duration=0.4")
    assert run(scn).record.to_csv() == run(scn).record.to_csv()


def test_seed_changes_the_perturbation():
    a = preset("longevity", "sim.duration=0.01")
    b = preset("longevity", "sim.duration=0.01", "sim.seed=7")
    assert run(a).record.to_csv() != run(b).record.to_csv()


def test_csv_header_order():
    text = run(preset("standing", "sim.duration=0.01")).record.to_csv()
    assert tuple(text.splitlines()[0].split(",")) == CSV_COLUMNS


def test_apex_detector_on_a_synthetic_sinusoid():
    t = np.arange(0, 10, 1e-3)
    cols = {c: np.zeros_like(t) for c in CSV_COLUMNS}
    cols.update(t=t, z_b=np.sin(t), zd_b=np.cos(t))
    rec = TrajectoryRecord(cols, np.zeros(len(t), bool), np.zeros_like(t), [])
    apexes = apex_detector(rec)
    assert [round(a, 2) for a, _ in apexes] == [round(math.pi / 2, 2), round(5 * math.pi / 2, 2)]
    assert all(z == pytest.approx(1.0, abs=1e-6) for _, z in apexes)


def test_apex_detector_rejects_empty_record():
    rec = TrajectoryRecord({c: np.zeros(0) for c in CSV_COLUMNS}, np.zeros(0, bool), np.zeros(0), [])
    with pytest.raises(ValueError):
        apex_detector(rec)


def test_standing_has_no_apex_and_carries_the_weight(leg):
    res = run(preset("standing", "sim.duration=1.0"))
    assert apex_detector(res.record) == []
    assert not np.any(np.isnan(res.record.columns["z_b"]))
    assert res.metrics["settled_normal_force"] == pytest.approx(leg.total_mass * leg.gravity, rel=0.01)


def test_contact_changes_twice_per_hop():
    res = run(preset("longevity", "sim.duration=3.0"))
    m = res.metrics
    assert m["hops"] >= 4
    assert abs(m["contact_changes"] - 2 * m["hops"]) <= 2


def energy_residual(res):
    w = res.work
    inflow = w["motors"] + w["contact"] + w["rail"] + w["cable_damping"]
    return w["energy_end"] - w["energy_start"] - inflow


class WigglingMotors:
    """Open-loop sinusoidal joint torques."""

    def update(self, q, qd, contact, dt, t=0.0):
        return np.array([8.0 * math.sin(40.0 * t), -6.0 * math.cos(25.0 * t)])


def test_energy_bookkeeping_in_flight():
    scn = Scenario(sim=SimConfig(duration=0.5, integrator="rk4"))
    res = run(scn, free_state(2.0, zd=2.0, joint_rates=(1.0, -1.0)), controller=WigglingMotors(), record=False)
    assert abs(res.work["motors"]) > 0.1
    assert res.work["rail"] < 0 and res.work["cable_damping"] < 0
    assert abs(energy_residual(res)) < 1e-5


def test_energy_bookkeeping_in_persistent_contact():
    res = run(preset("standing", "sim.duration=1.0", 'sim.integrator="rk4"'), record=False)
    assert res.work["contact"] < 0
    assert abs(energy_residual(res)) < 1e-5


def test_energy_bookkeeping_across_touchdowns_converges():
    # the damper switches on with a jump at touchdown, so RK4 loses order there
    residuals = []
    for dt in (1e-4, 5e-5):
        scn = preset("longevity", "sim.duration=1.0", 'sim.integrator="rk4"', f"sim.dt={dt}")
        res = run(scn, record=False)
        residuals.append(abs(energy_residual(res)))
    assert residuals[1] < residuals[0] / 4
    assert residuals[1] < 1e-4 * abs(res.work["motors"])


def test_torques_respect_the_limit_in_every_scenario():
    for name in ("standing", "longevity", "highjump"):
        res = run(preset(name, "sim.duration=1.0"))
        tau = np.column_stack([res.record.columns["tau_hfe"], res.record.columns["tau_kfe"]])
        assert np.max(np.abs(tau)) <= 70.0 + 1e-9
        assert res.metrics["peak_motor_torque"] <= 70.0 + 1e-9


def test_instability_guard_fires():
    with pytest.raises(SimulationInstability):
        run(preset("longevity", "sim.dt=0.01", "sim.duration=1.0"), record=False)


def test_invalid_configuration_is_rejected():
    scn = dataclasses.replace(Scenario(), scenario=ScenarioConfig(kind="moonwalk"))
    with pytest.raises(ValueError, match="kind"):
        run(scn)


def test_integrators_agree_on_apex_height():
    heights = {}
    for integrator in ("semi-implicit-euler", "rk4"):
        scn = preset("longevity", "sim.duration=6.0", f'sim.integrator="{integrator}"')
        heights[integrator] = np.array(run(scn).metrics["apex_heights"])
    a, b = heights.values()
    n = min(len(a), len(b))
    assert n >= 8
    # single hops jitter with the 2.5 kHz controller sampling; the first ones and the mean must agree
    assert np.max(np.abs(a[:2] - b[:2])) < 1e-3
    assert abs(a[2:n].mean() - b[2:n].mean()) < 1e-3
