"""Single maximal jump from a crouch."""

import argparse
import os

from hopleg.config import load_config
from hopleg.sim import run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    ap.add_argument("--out", default="results/highjump")
    args = ap.parse_args()

    res = run(load_config(preset="highjump", overrides=args.overrides).scenario())
    os.makedirs(args.out, exist_ok=True)
    res.record.to_csv(os.path.join(args.out, "trajectory.csv"))
    m = res.metrics
    print(f"rest height {m['rest_height']:.3f} m, apex {m['max_apex']:.3f} m, "
          f"rise {m['apex_above_rest']:.3f} m")
    print(f"peak motor torque {m['peak_motor_torque']:.2f} Nm, cable torque {m['peak_transmitted_torque']:.2f} Nm, "
          f"joint speed {m['peak_joint_speed']:.2f} rad/s")
    print(f"motor work {res.work['motors']:.1f} J, battery energy {res.report.energy['P_b']:.1f} J")


if __name__ == "__main__":
    main()
