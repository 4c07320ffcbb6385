"""Command-line entry point: ``hopleg <subcommand> [options]``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 simulation instability,
5 input/output failure. All files are written under ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from hopleg import model as mdl
from hopleg.config import ConfigError, load_config
from hopleg.powertrain import (
    REFERENCE_LONGEVITY,
    EnergyReport,
    sweep_to_csv,
    testbench_freq_sweep,
    testbench_step_response,
)
from hopleg.sim import SimulationInstability, run

EXIT_USAGE, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_IO = 2, 3, 4, 5
STEP_ERROR_LIMIT = 0.004  # relative steady-state error accepted on the bench
SCENARIO_PRESETS = {"simulate": "default", "hop": "longevity", "highjump": "highjump"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hopleg", description="Hopping-leg simulator, test bench and energy reports.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, preset_help=True):
        p.add_argument("--config", "-c", action="append", default=[], metavar="INI",
                       help="configuration file; repeat to layer several")
        p.add_argument("--set", "--override", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override one configuration value")
        p.add_argument("--out", "-o", default="results", help="output directory (default: results)")
        if preset_help:
            p.add_argument("--preset", help="built-in scenario preset to start from")

    p = sub.add_parser("simulate", help="run the scenario described by the configuration")
    common(p)
    p.add_argument("--duration", type=float, help="simulated time in seconds")
    p = sub.add_parser("hop", help="continuous hopping (longevity preset)")
    common(p)
    p.add_argument("--duration", type=float, help="simulated time in seconds")
    p = sub.add_parser("highjump", help="single maximal jump (highjump preset)")
    common(p)
    p.add_argument("--duration", type=float, help="simulated time in seconds")

    p = sub.add_parser("step-response", help="test-bench torque step response")
    common(p, preset_help=False)
    p.add_argument("--torque", type=float, action="append", help="step command in Nm; repeatable")
    p.add_argument("--duration", type=float, help="seconds per step")
    p = sub.add_parser("freq-sweep", help="test-bench sinusoidal torque tracking")
    common(p, preset_help=False)
    p.add_argument("--amplitude", type=float, help="command amplitude in Nm")
    p.add_argument("--freqs", type=float, nargs="+", help="frequencies in Hz")
    p.add_argument("--cycles", type=int, help="cycles fitted per frequency")

    p = sub.add_parser("energy-report", help="power breakdown from a trajectory CSV or the published figures")
    common(p, preset_help=False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trajectory", help="trajectory CSV written by simulate/hop/highjump")
    src.add_argument("--reference", action="store_true", help="use the published longevity figures")

    p = sub.add_parser("validate", help="check the leg configuration against the hardware parameter table")
    common(p, preset_help=False)
    return parser


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_summary(out: str, summary: dict, name: str = "summary") -> str:
    """Flat ``key=value`` text plus the same content as JSON. Returns the text."""
    text = "".join(f"{k}={_format(v)}\n" for k, v in summary.items())
    with open(os.path.join(out, f"{name}.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(out, f"{name}.json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return text


def emit_report(report: EnergyReport, out: str, fmt: str = "both") -> dict:
    """Write the energy breakdown as ``energy_report.txt`` and/or ``.json``."""
    data = report.as_dict()
    data["reference_positive_work_W"] = REFERENCE_LONGEVITY["positive_work_W"]
    data["reference_negative_work_W"] = REFERENCE_LONGEVITY["negative_work_W"]
    if fmt in ("text", "both"):
        with open(os.path.join(out, "energy_report.txt"), "w") as fh:
            fh.write("".join(f"{k}={_format(v)}\n" for k, v in data.items()))
    if fmt in ("json", "both"):
        with open(os.path.join(out, "energy_report.json"), "w") as fh:
            json.dump(_jsonable(data), fh, indent=2)
            fh.write("\n")
    return data


def report_from_csv(path: str, regen_efficiency: float = 1.0) -> EnergyReport:
    """Energy report from the power columns of a recorded trajectory."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: trajectory has zero duration")
    t = np.array([float(r["t"]) for r in rows])
    step = np.diff(t)
    step = np.append(step, step[-1])
    duration = float(step.sum())
    if duration <= 0:
        raise ConfigError(f"{path}: trajectory has zero duration")
    energy = {}
    for ch in ("P_b", "P_J", "P_mech", "P_e", "P_recup"):
        energy[ch] = math.fsum(float(r[ch]) * s for r, s in zip(rows, step))
    energy["P_neg"] = energy["P_recup"] / regen_efficiency if regen_efficiency > 0 else 0.0
    # P_mech in the trajectory is positive output only, as in the live ledger
    return EnergyReport(duration, energy, {k: v / duration for k, v in energy.items()})


def _scenario_command(args, cfg, out) -> int:
    scn = cfg.scenario()
    result = run(scn)
    result.record.to_csv(os.path.join(out, "trajectory.csv"))
    m = result.metrics
    summary = {"command": args.command, "scenario": scn.scenario.kind}
    summary.update({k: v for k, v in m.items() if k != "apex_heights"})
    summary["apexes"] = [h for _, h in result.record.apexes]
    summary["recuperation_rate"] = result.report.recuperation_rate
    summary["reference_recuperation_rate"] = REFERENCE_LONGEVITY["recuperation_rate"]
    summary["ledger_residual_J"] = result.report.ledger_residual()
    summary.update({f"work_{k}_J": v for k, v in result.work.items()})
    emit_report(result.report, out)
    text = write_summary(out, summary)
    print(text, end="")
    print(f"recuperation rate: simulated {result.report.recuperation_rate:.3f}, "
          f"hardware reference {REFERENCE_LONGEVITY['recuperation_rate']:.3f}")
    return 0


def _step_command(args, cfg, out) -> int:
    settings = cfg.bench_settings()
    bench = cfg.bench()
    torques = args.torque or list(settings.step_torques)
    duration = args.duration or settings.step_duration
    summary = {"command": "step-response", "error_limit": STEP_ERROR_LIMIT}
    ok = True
    for torque in torques:
        if abs(torque) > bench.max_torque:
            raise ConfigError(f"step command {torque} Nm exceeds the {bench.max_torque} Nm limit")
        resp = testbench_step_response(torque, duration, settings.dt, bench)
        resp.to_csv(os.path.join(out, f"step_{torque:g}Nm.csv"))
        err = resp.steady_state_error()
        passed = bool(err < STEP_ERROR_LIMIT)
        ok &= passed
        summary[f"steady_state_error_{torque:g}Nm"] = err
        print(f"step {torque:g} Nm: steady-state error {100 * err:.4f}% "
              f"{'<' if passed else '>='} {100 * STEP_ERROR_LIMIT:.1f}% {'PASS' if passed else 'FAIL'}")
    summary["all_below_limit"] = ok
    write_summary(out, summary)
    return 0


def _sweep_command(args, cfg, out) -> int:
    settings = cfg.bench_settings()
    bench = cfg.bench()
    amp = args.amplitude if args.amplitude is not None else settings.sweep_amplitude
    freqs = args.freqs or list(settings.sweep_freqs)
    cycles = args.cycles or settings.cycles
    try:
        points = testbench_freq_sweep(amp, freqs, cycles, bench, settings.dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sweep_to_csv(points, os.path.join(out, "sweep.csv"))
    summary = {"command": "freq-sweep", "amplitude_Nm": amp}
    for pt in points:
        analytic = abs(bench.transfer(pt.freq))
        summary[f"gain_{pt.freq:g}Hz"] = pt.gain
        summary[f"phase_{pt.freq:g}Hz_deg"] = pt.phase_deg
        summary[f"analytic_gain_{pt.freq:g}Hz"] = analytic
        print(f"{pt.freq:g} Hz: gain {pt.gain:.4f} (analytic {analytic:.4f}), phase {pt.phase_deg:.1f} deg")
    write_summary(out, summary)
    return 0


def _energy_command(args, cfg, out) -> int:
    if args.reference:
        r = REFERENCE_LONGEVITY
        report = EnergyReport.from_averages(
            1.0, P_b=r["battery_W"], P_J=r["joule_W"], P_mech=r["positive_work_W"],
            P_neg=r["negative_work_W"], P_recup=r["negative_work_W"])
    else:
        motors = cfg.build("motor")
        report = report_from_csv(args.trajectory, motors.regen_efficiency)
    data = emit_report(report, out)
    for k, v in data.items():
        print(f"{k}={_format(v)}")
    return 0


def _validate_command(args, cfg, out) -> int:
    model = cfg.build("model")
    report = mdl.validate(model, cfg.build("motor"), cfg.build("cable"))
    text = report.summary()
    print(text)
    with open(os.path.join(out, "validation.txt"), "w") as fh:
        fh.write(text + "\n")
    return 0 if report.ok else EXIT_CONFIG


COMMANDS = {
    "simulate": _scenario_command,
    "hop": _scenario_command,
    "highjump": _scenario_command,
    "step-response": _step_command,
    "freq-sweep": _sweep_command,
    "energy-report": _energy_command,
    "validate": _validate_command,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        preset = getattr(args, "preset", None) or SCENARIO_PRESETS.get(args.command, "default")
        overrides = list(args.overrides)
        if getattr(args, "duration", None) is not None and args.command in SCENARIO_PRESETS:
            overrides.append(f"sim.duration={args.duration!r}")
        cfg = load_config(args.config, overrides, preset)
        if args.command in SCENARIO_PRESETS:
            cfg.scenario()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "effective_config.ini"), "w") as fh:
            fh.write(cfg.dump())
        return COMMANDS[args.command](args, cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationInstability as exc:
        print(f"simulation unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
