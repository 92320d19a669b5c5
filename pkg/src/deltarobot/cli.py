"""Command line entry point: ``delta design|simulate|metrics|model init``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .allocation import build_allocation
from .geometry import rot_x
from .metrics import MetricsError, compute_metrics
from .plots import write_plot_scripts
from .robot_model import ROLLING_ANGLE, REFERENCE_TILT, contact_point, forward_kinematics, in_rolling_configuration
from .rotor_design import hull_facets, optimize_tilt, torque_generators
from .scenarios import BUILTIN, ScenarioError, run_scenario
from .telemetry import TelemetryLog


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _load(args) -> cfgmod.Config:
    return cfgmod.load_config(args.config) if args.config else cfgmod.Config()


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def cmd_model_init(args) -> int:
    text = cfgmod.default_config_text()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "delta.toml").write_text(text)
        print(out / "delta.toml")
    else:
        sys.stdout.write(text)
    return 0


WRENCH_ROWS = ("f_x", "f_y", "f_z", "tau_x", "tau_y", "tau_z")


def cmd_model_allocation(args) -> int:
    """Allocation matrix at joint angles ``--q``; the contact-point version too when upright is possible."""
    model = _load(args).model
    q = np.array(args.q)
    frames = forward_kinematics(model, q)
    mats = [("cog", build_allocation(frames, model, "cog").matrix)]
    if in_rolling_configuration(q):
        upright = forward_kinematics(model, q, cog_pose=(rot_x(np.pi / 2), np.zeros(3)))
        mats.append(("cp", build_allocation(contact_point(model, upright), model, "cp").matrix))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "row"] + [f"lam_{c}{i}" for i in (1, 2, 3) for c in "yz"])
    for tag, mat in mats:
        for name, row in zip(WRENCH_ROWS, mat):
            w.writerow([tag, name] + [repr(float(v)) for v in row])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "allocation.csv").write_text(buf.getvalue())
        print(out / "allocation.csv")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_design(args) -> int:
    cfg = _load(args)
    d = cfg.design
    seed = d.seed if args.seed is None else args.seed
    res = optimize_tilt(cfg.model, tuple(d.bounds), d.w1, d.w2, seed, d.max_evals, d.mu, d.lam)
    gen = torque_generators(cfg.model, tilt=res.tilt)
    equations, vertices = hull_facets(gen.vectors, gen.ranges, cfg.model.thrust_max)
    reference = np.array(REFERENCE_TILT)
    summary = {
        "tilt": res.tilt.tolist(),
        "tau_min": res.tau_min,
        "objective": res.objective,
        "tau_min_untilted": res.tau_min_untilted,
        "objective_untilted": res.objective_untilted,
        "evaluations": res.evaluations,
        "seed": seed,
        "weights": [d.w1, d.w2],
        "reference_tilt": reference.tolist(),
        "reference_abs_diff": np.abs(res.tilt - reference).tolist(),
    }
    out = Path(args.out or "design")
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "design.json", summary)
    with open(out / "facets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nx", "ny", "nz", "offset"])
        w.writerows([[repr(float(v)) for v in row] for row in equations])
    with open(out / "vertices.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau_x", "tau_y", "tau_z"])
        w.writerows([[repr(float(v)) for v in row] for row in vertices])
    print(
        f"tilt = [{', '.join(f'{t:+.4f}' for t in res.tilt)}] rad  "
        f"tau_min = {res.tau_min:.4f} N m (untilted {res.tau_min_untilted:.4f})"
    )
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    scenario = cfg.scenario(args.scenario)
    result = run_scenario(scenario, cfg.model, cfg.controller, cfg.sim, seed=args.seed)
    out = Path(args.out or Path("runs") / scenario.name)
    out.mkdir(parents=True, exist_ok=True)
    result.log.write(out / "log.csv")
    _write_json(out / "metrics.json", result.summary())
    write_plot_scripts(out)
    m = result.metrics
    line = f"{scenario.name}: {len(result.log)} samples"
    if m is not None:
        line += (
            f", position rms {np.round(m.position_rms, 4).tolist()} m"
            f", orientation rms {np.round(m.orientation_rms, 4).tolist()} rad"
            f", tilt err max {m.tilt_error_max:.4f} rad, speed {m.mean_speed:.3f} m/s"
        )
    print(line)
    if result.aborted:
        print(f"aborted: {result.aborted}", file=sys.stderr)
        return 2
    return 0


def cmd_metrics(args) -> int:
    out = Path(args.out) if args.out else None
    log_path = Path(args.log) if args.log else (out / "log.csv" if out else Path("log.csv"))
    log = TelemetryLog.read(log_path)
    window = tuple(args.window) if args.window else None
    if window is None and args.scenario:
        window = _load(args).scenario(args.scenario).window
    metrics = compute_metrics(log, window)
    data = metrics.to_dict()
    if out:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "metrics.json", {"log": str(log_path), "metrics": data})
    data = {k: v for k, v in data.items() if k != "thrust_sum"}
    print(json.dumps(data, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (defaults are used without one)")
    common.add_argument("--seed", type=_seed, help="random seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="delta", description="Delta multirotor design and simulation workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="optimise the propeller tilt angles")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", parents=[common], help="run a scenario")
    p.add_argument("--scenario", required=True, help=f"built-in ({', '.join(BUILTIN)}) or defined in the config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", parents=[common], help="recompute metrics from a log")
    p.add_argument("--log", help="log file (default: <out>/log.csv)")
    p.add_argument("--scenario", help="take the evaluation window from this scenario")
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"), help="evaluation window [s]")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("model", help="model utilities")
    msub = p.add_subparsers(dest="model_command", required=True)
    p = msub.add_parser("init", parents=[common], help="write the default configuration")
    p.set_defaults(func=cmd_model_init)
    p = msub.add_parser("allocation", parents=[common], help="dump the allocation matrix as CSV")
    p.add_argument("--q", nargs=2, type=float, default=(ROLLING_ANGLE, ROLLING_ANGLE), metavar=("Q1", "Q2"))
    p.set_defaults(func=cmd_model_allocation)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, ScenarioError, MetricsError, FileNotFoundError) as exc:
        print(f"delta: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
