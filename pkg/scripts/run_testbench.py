"""Test-bench experiments: torque steps and a sinusoidal sweep, with the analytic model alongside."""

import argparse
import os

from hopleg.config import load_config
from hopleg.powertrain import sweep_to_csv, testbench_freq_sweep, testbench_step_response


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", "-c", action="append", default=[])
    ap.add_argument("--out", default="results/testbench")
    args = ap.parse_args()

    cfg = load_config(args.config)
    settings, bench = cfg.bench_settings(), cfg.bench()
    os.makedirs(args.out, exist_ok=True)
    print(f"bench: J={bench.rotor_inertia:.4g} kg m^2, k={bench.stiffness:g} Nm/rad, "
          f"zeta={bench.damping_ratio:.3f}, f_n={bench.natural_frequency:.1f} Hz")
    for torque in settings.step_torques:
        resp = testbench_step_response(torque, settings.step_duration, settings.dt, bench)
        resp.to_csv(os.path.join(args.out, f"step_{torque:g}Nm.csv"))
        print(f"step {torque:5.1f} Nm  overshoot {resp.measured.max() / torque - 1:6.1%}  "
              f"steady-state error {resp.steady_state_error():.2e}")
    points = testbench_freq_sweep(settings.sweep_amplitude, settings.sweep_freqs, settings.cycles, bench,
                                  settings.dt)
    sweep_to_csv(points, os.path.join(args.out, "sweep.csv"))
    for p in points:
        print(f"{p.freq:5.1f} Hz  gain {p.gain:.4f} (analytic {abs(bench.transfer(p.freq)):.4f})  "
              f"phase {p.phase_deg:7.2f} deg")


if __name__ == "__main__":
    main()
