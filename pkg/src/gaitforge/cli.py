"""Command-line front end: synth, sweep, simulate, export, serve.

Exit codes: 0 success, 1 synthesis/runtime failure (with a failure
report on stderr), 2 usage error (argparse prints the flag grammar).
Gait JSON written here goes through the same canonical formatter as the
HTTP service, so both surfaces emit identical bytes for identical data.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import catalog as cat
from . import frames as frames_mod
from . import hybridsim
from .model import ModelParams, load_params
from .transcribe import CostMode, GaitSpec

_ALL_COSTS = [m.value for m in CostMode]


def _load_cli_params(path: str | None) -> ModelParams:
    return load_params(path) if path else ModelParams()


def _write_text(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _failure_report(exc: cat.SynthesisFailed) -> str:
    return cat.canonical_json({
        "status": exc.status,
        "failed_check": exc.failed_check,
        "detail": exc.detail,
        "violations": exc.violations(),
    }) + "\n"


def _cmd_synth(args) -> int:
    spec = GaitSpec(
        tl=args.tl,
        cost_mode=CostMode.from_name(args.cost),
        v=args.v,
        params=_load_cli_params(args.params),
    )
    try:
        gait = cat.synthesize(spec)
    except cat.SynthesisFailed as exc:
        sys.stderr.write(_failure_report(exc))
        return 1
    _write_text(cat.canonical_json(gait.to_dict()) + "\n", args.output)
    return 0


def _cmd_sweep(args) -> int:
    if args.tl_step <= 0:
        raise ValueError(f"--tl-step must be positive, got {args.tl_step}")
    if args.tl_max < args.tl_min:
        raise ValueError("--tl-max must be >= --tl-min")
    grid = np.round(
        np.arange(args.tl_min, args.tl_max + 0.5 * args.tl_step, args.tl_step), 10
    )
    if args.costs.strip().lower() == "all":
        modes = list(_ALL_COSTS)
    else:
        modes = [CostMode.from_name(c).value for c in args.costs.split(",") if c.strip()]
        if not modes:
            raise ValueError("--costs must name at least one cost mode")
    catalog = cat.sweep(grid, modes, _load_cli_params(args.params), v=args.v)
    cat.save(catalog, args.output)
    n_ok = sum(1 for e in catalog.entries if e.status == "verified")
    sys.stderr.write(f"sweep: {n_ok}/{len(catalog.entries)} verified -> {args.output}\n")
    return 0 if n_ok == len(catalog.entries) or not args.strict else 1


def _merged_rollout_csv(steps: list[hybridsim.StepTrace]) -> str:
    """One CSV over consecutive steps, time accumulated across impacts."""
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t", "q_st", "q_sw", "qd_st", "qd_sw", "u", "F_T", "F_N"])
    offset = 0.0
    for trace in steps:
        for i in range(len(trace.t)):
            writer.writerow([
                repr(float(v))
                for v in (offset + trace.t[i], *trace.states[i], trace.u[i], *trace.grf[i])
            ])
        offset += trace.t_f
    return buf.getvalue()


def _cmd_simulate(args) -> int:
    import json

    with open(args.gait, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict) and "gait" in raw:
        raw = raw["gait"]
    gait = cat.gait_from_dict(raw, _load_cli_params(args.params))
    ctrl = hybridsim.ControlSignal.sampled(gait.nodes, gait.inputs)
    try:
        steps = hybridsim.rollout(gait.states[0], ctrl, args.steps, gait.spec.params)
    except hybridsim.RolloutError as exc:
        sys.stderr.write(
            cat.canonical_json({
                "status": "rollout_failed",
                "step_index": exc.step_index,
                "detail": exc.reason,
            }) + "\n"
        )
        return 1
    _write_text(_merged_rollout_csv(steps), args.output)
    return 0


def _frames_csv(payload: dict) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([
        "t",
        "stance_hip_x", "stance_hip_y", "stance_foot_x", "stance_foot_y",
        "swing_hip_x", "swing_hip_y", "swing_foot_x", "swing_foot_y",
    ])
    for fr in payload["frames"]:
        writer.writerow([repr(float(v)) for v in (fr["t"], *fr["stance"], *fr["swing"])])
    return buf.getvalue()


def _cmd_export(args) -> int:
    catalog = cat.load(getattr(args, "from"))
    try:
        tl_text, mode_text = args.key.split(",", 1)
        tl = float(tl_text)
        mode = CostMode.from_name(mode_text)
    except ValueError as exc:
        raise ValueError(f"--key must look like '0.5,torque2': {exc}") from exc
    entry = catalog.get(tl, mode)
    if entry is None or entry.gait is None:
        sys.stderr.write(
            cat.canonical_json({
                "status": "missing",
                "detail": f"no verified gait for key {args.key!r}",
            }) + "\n"
        )
        return 1
    gait = entry.gait
    if args.format == "gait":
        _write_text(cat.canonical_json(gait.to_dict()) + "\n", args.output)
    elif args.format == "csv":
        _write_text(_frames_csv(frames_mod.frames_for_gait(gait)), args.output)
    else:
        _write_text(
            cat.canonical_json(frames_mod.frames_for_gait(gait)) + "\n", args.output
        )
    return 0


def _cmd_serve(args) -> int:
    from . import service

    service.serve(
        host=args.host, port=args.port,
        catalog_path=args.catalog, solve_timeout=args.timeout,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitforge",
        description="Synthesize, sweep, simulate, export, and serve walking gaits "
                    "for the planar compass biped.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="solve one gait and print its JSON")
    p_synth.add_argument("--tl", type=float, required=True, help="step length (m)")
    p_synth.add_argument("--cost", required=True,
                         help="cost mode: " + ", ".join(_ALL_COSTS))
    p_synth.add_argument("--v", type=int, default=25, help="collocation nodes")
    p_synth.add_argument("--params", help="TOML file of model parameter overrides")
    p_synth.add_argument("-o", "--output", help="output path (default stdout)")
    p_synth.set_defaults(func=_cmd_synth)

    p_sweep = sub.add_parser("sweep", help="solve a parameter grid into a catalog file")
    p_sweep.add_argument("--tl-min", type=float, required=True)
    p_sweep.add_argument("--tl-max", type=float, required=True)
    p_sweep.add_argument("--tl-step", type=float, required=True)
    p_sweep.add_argument("--costs", default="all",
                         help="'all' or comma-separated cost modes")
    p_sweep.add_argument("--v", type=int, default=25, help="collocation nodes")
    p_sweep.add_argument("--params", help="TOML file of model parameter overrides")
    p_sweep.add_argument("--strict", action="store_true",
                         help="exit 1 unless every grid cell verified")
    p_sweep.add_argument("-o", "--output", required=True, help="catalog file path")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_sim = sub.add_parser("simulate", help="roll a solved gait's control forward")
    p_sim.add_argument("--gait", required=True, help="gait JSON file (from synth/export)")
    p_sim.add_argument("--steps", type=int, default=1, help="number of walking steps")
    p_sim.add_argument("--params", help="TOML file of model parameter overrides")
    p_sim.add_argument("-o", "--output", help="CSV output path (default stdout)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_exp = sub.add_parser("export", help="pull one catalog entry as frames/CSV/gait JSON")
    p_exp.add_argument("--from", required=True, help="catalog file path")
    p_exp.add_argument("--key", required=True, help="entry key, e.g. 0.5,torque2")
    p_exp.add_argument("--format", choices=["frames", "csv", "gait"], default="frames")
    p_exp.add_argument("-o", "--output", help="output path (default stdout)")
    p_exp.set_defaults(func=_cmd_export)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--catalog", help="catalog file to load (and write labels to)")
    p_serve.add_argument("--timeout", type=float, default=120.0,
                         help="per-solve timeout in seconds")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"gaitforge {args.command}: {exc}\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(f"gaitforge {args.command}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
