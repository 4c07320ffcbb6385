"""Continuous hopping: hop statistics and the power breakdown."""

import argparse
import os

from hopleg.config import load_config
from hopleg.powertrain import REFERENCE_LONGEVITY
from hopleg.sim import run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="longevity")
    ap.add_argument("--duration", type=float)
    ap.add_argument("--out", default="results/longevity")
    args = ap.parse_args()

    overrides = [f"sim.duration={args.duration!r}"] if args.duration else []
    res = run(load_config(preset=args.preset, overrides=overrides).scenario())
    os.makedirs(args.out, exist_ok=True)
    res.record.to_csv(os.path.join(args.out, "trajectory.csv"))

    m, rep = res.metrics, res.report
    print(f"hops {m['hops']}, base height change {m['base_height_change']:.3f} m, "
          f"foot clearance {m['foot_clearance']:.3f} m")
    print(f"peak motor torque {m['peak_motor_torque']:.1f} Nm, cable {m['peak_transmitted_torque']:.1f} Nm, "
          f"joint speed {m['peak_joint_speed']:.1f} rad/s")
    b = rep.breakdown()
    print(f"battery {b['battery_W']:.2f} W = joule {b['joule_W']:.2f} + electronics {b['electronics_W']:.2f} "
          f"+ mechanical loss {b['mechanical_loss_W']:.2f}")
    print(f"positive work {rep.average['P_mech']:.2f} W, negative work {rep.average['P_neg']:.2f} W "
          f"(hardware {REFERENCE_LONGEVITY['positive_work_W']} / {REFERENCE_LONGEVITY['negative_work_W']} W)")
    print(f"recuperation rate {rep.recuperation_rate:.3f} (hardware {REFERENCE_LONGEVITY['recuperation_rate']})")
    w = res.work
    print("work over the run [J]: " + ", ".join(f"{k} {v:.2f}" for k, v in w.items()))


if __name__ == "__main__":
    main()
