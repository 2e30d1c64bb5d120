"""Command-line front end.

Subcommands compose through files: ``classify``/``identify`` emit a point
JSON that ``tune`` consumes; ``tune`` emits a controller JSON that
``simulate`` and ``margins`` consume.  All numeric output is serialized at
full double precision so identical invocations produce byte-identical
artifacts; comparisons against printed-precision values are the
``reproduce`` subcommand's job.

Defaults can be overridden by an INI-style config file (section per
subcommand, keys mirror the flags) and by the environment variables
``PMRTUNE_OUT_DIR`` and ``PMRTUNE_STEP``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmarks
from .analysis import (
    make_reference,
    margins,
    nyquist_data,
    simulate_closed_loop,
    stability_check,
    write_bode_csv,
    write_nyquist_csv,
    write_timeseries_csv,
)
from .ident import FrequencyPoint, classify, rap_auto, run_rap, RapConfig
from .lti import TransferFunction, parse_transfer_function
from .tuning import HarmonicSet, PmrController, TuningSpec, tune

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _emit_json(data: dict, path: str | None, out_dir: Path) -> None:
    text = json.dumps(data, indent=2, sort_keys=False) + "\n"
    if path:
        target = Path(path)
        if not target.is_absolute():
            target = out_dir / target
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    else:
        sys.stdout.write(text)


def _load_plant(args) -> TransferFunction:
    if getattr(args, "plant", None):
        key = args.plant.lower()
        if key not in benchmarks.BENCHMARK_PLANTS:
            raise UsageError(
                f"unknown plant id {args.plant!r}; expected one of "
                + ", ".join(sorted(benchmarks.BENCHMARK_PLANTS)))
        return benchmarks.BENCHMARK_PLANTS[key]
    if getattr(args, "plant_file", None):
        return parse_transfer_function(Path(args.plant_file).read_text())
    if getattr(args, "num", None) and getattr(args, "den", None):
        num = [float(v) for v in args.num.split(",")]
        den = [float(v) for v in args.den.split(",")]
        return TransferFunction(num, den, getattr(args, "delay", 0.0) or 0.0)
    raise UsageError("a plant is required: --plant, --plant-file, "
                     "or --num/--den")


def _load_controller(args) -> PmrController:
    path = Path(args.controller)
    if not path.exists():
        raise UsageError(f"controller file not found: {args.controller}")
    return PmrController.from_dict(json.loads(path.read_text()))


def _add_plant_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--plant",
                        help="built-in plant id (ga, gb or gc)")
    parser.add_argument("--plant-file",
                        help="file with 'num=[...]; den=[...]; delay=...'")
    parser.add_argument("--num", help="numerator coefficients, comma separated")
    parser.add_argument("--den", help="denominator coefficients, comma separated")
    parser.add_argument("--delay", type=float, default=0.0,
                        help="dead time in seconds (default 0)")


def _cmd_classify(args, out_dir: Path) -> int:
    plant = _load_plant(args)
    point = classify(plant)
    _emit_json(point.to_dict(), args.output, out_dir)
    return EXIT_OK


def _cmd_identify(args, out_dir: Path) -> int:
    plant = _load_plant(args)
    if args.gamma is None:
        result = rap_auto(plant, args.d, sim_duration=args.duration,
                          step=args.step)
    else:
        config = RapConfig(gamma_deg=args.gamma, d=args.d,
                           sim_duration=args.duration, step=args.step)
        result = run_rap(plant, config)
    data = result.point.to_dict()
    data.update({"a_nu": result.a_nu, "d": result.config.d,
                 "f_mag": result.f_mag,
                 "gamma_deg": result.config.gamma_deg})
    _emit_json(data, args.output, out_dir)
    return EXIT_OK


def _cmd_tune(args, out_dir: Path) -> int:
    point_path = Path(args.point)
    if not point_path.exists():
        raise UsageError(f"point file not found: {args.point}")
    point = FrequencyPoint.from_dict(json.loads(point_path.read_text()))
    kind = "consecutive" if args.set == "i" else "odd"
    harmonics = HarmonicSet(kind, args.modes)
    omega_r = args.wr_ratio * point.omega_nu / harmonics.max_mode
    if args.wr:
        omega_r = args.wr
    xi = tuple(float(v) for v in args.xi.split(",")) if args.xi else ()
    spec = TuningSpec(point, omega_r, harmonics, xi)
    controller = tune(spec,
                      use_printed_coefficients=args.use_printed_coefficients)
    data = controller.to_dict()
    data["transfer_function"] = controller.transfer_function().to_text()
    _emit_json(data, args.output, out_dir)
    return EXIT_OK


def _resolve_reference(args, controller: PmrController):
    omega_r = controller.omega_r
    if not omega_r:
        raise UsageError("controller JSON lacks omega_r")
    modes = tuple(m.n for m in controller.modes)
    if args.ref == "sine":
        return make_reference("sine", omega_r, [1])
    if args.ref == "sawtooth":
        return make_reference("sawtooth_trunc", omega_r, modes)
    if args.ref == "square":
        return make_reference("square_trunc", omega_r, modes)
    raise UsageError(f"unknown reference kind {args.ref!r}")


def _cmd_simulate(args, out_dir: Path) -> int:
    plant = _load_plant(args)
    controller = _load_controller(args)
    ref = _resolve_reference(args, controller)
    duration = args.duration
    if duration is None:
        duration = 40.0 * ref.period
    result = simulate_closed_loop(plant, controller, ref, duration,
                                  step=args.step)
    metrics = result.metrics_dict()
    if args.timeseries_csv:
        target = out_dir / args.timeseries_csv
        target.parent.mkdir(parents=True, exist_ok=True)
        write_timeseries_csv(target, result)
        metrics["timeseries_csv"] = str(target)
    _emit_json(metrics, args.output, out_dir)
    return EXIT_OK


def _cmd_margins(args, out_dir: Path) -> int:
    plant = _load_plant(args)
    controller = _load_controller(args)
    report = margins(plant, controller)
    verdict = stability_check(plant, controller, step=args.step)
    data = report.to_dict()
    data["verdict"] = verdict["verdict"]
    if args.bode_csv:
        from .analysis import loop_transfer_function

        grid = np.logspace(-3, 3, 2400)
        grid = grid[np.all(
            np.abs(np.log(grid[:, None]
                          / np.array([m.omega_rn for m in controller.modes]
                                     )[None, :])) > 1e-9, axis=1)]
        target = out_dir / args.bode_csv
        target.parent.mkdir(parents=True, exist_ok=True)
        write_bode_csv(target, loop_transfer_function(plant, controller),
                       grid)
        data["bode_csv"] = str(target)
    if args.nyquist_csv:
        grid = np.logspace(-3, 3, 2400)
        target = out_dir / args.nyquist_csv
        target.parent.mkdir(parents=True, exist_ok=True)
        write_nyquist_csv(target, nyquist_data(plant, controller, grid))
        data["nyquist_csv"] = str(target)
    _emit_json(data, args.output, out_dir)
    return EXIT_OK


def _cmd_reproduce(args, out_dir: Path) -> int:
    ids = None
    if args.subset == "acceptance":
        ids = benchmarks.METRIC_ACCEPTANCE_IDS
    elif args.subset == "tables":
        ids = ()
    reports = benchmarks.reproduce_all(metric_scenarios=ids, step=args.step)
    out_dir.mkdir(parents=True, exist_ok=True)
    md_path = out_dir / (args.report_name + ".md")
    json_path = out_dir / (args.report_name + ".json")
    md_path.write_text(benchmarks.report_to_markdown(reports))
    json_path.write_text(benchmarks.report_to_json(reports))
    n_fail = sum(r.n_fail for r in reports.values())
    expected_failures = {
        c.cell for r in reports.values() for c in r.failed()
        if c.cell in benchmarks.ERRATA}
    unexpected = {
        c.cell for r in reports.values() for c in r.failed()
        if c.cell not in benchmarks.ERRATA}
    summary = {
        "reports": {k: {"n_pass": r.n_pass, "n_fail": r.n_fail}
                    for k, r in reports.items()},
        "known_errata_failures": sorted(expected_failures),
        "unexpected_failures": sorted(unexpected),
        "markdown": str(md_path),
        "json": str(json_path),
    }
    _emit_json(summary, args.output, out_dir)
    return EXIT_OK if not unexpected else EXIT_COMPUTATION


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmrtune",
        description="Model-free tuning of proportional-multi-resonant "
                    "controllers from one identified frequency-response "
                    "point.")
    parser.add_argument("--config", help="INI config file mirroring the flags")
    parser.add_argument("--out-dir", default=None,
                        help="artifact directory (env PMRTUNE_OUT_DIR)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="analytic classification of a plant")
    _add_plant_arguments(p)
    p.add_argument("--output", help="write the point JSON here")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("identify",
                       help="relay-with-adjustable-phase identification")
    _add_plant_arguments(p)
    p.add_argument("--d", type=float, required=True, help="relay gain")
    p.add_argument("--gamma", type=float, default=None,
                   help="fixed relay phase in degrees; default walks "
                        "0, -60, -120")
    p.add_argument("--duration", type=float, default=200.0)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--output", help="write the point JSON here")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("tune", help="synthesize the controller from a point")
    p.add_argument("--point", required=True, help="point JSON file")
    p.add_argument("--modes", type=int, required=True,
                   help="number of resonant modes N (1..5)")
    p.add_argument("--set", choices=("i", "ii"), default="i",
                   help="harmonic set: i = 1..N, ii = odd")
    p.add_argument("--wr-ratio", type=float, default=0.1,
                   help="max compensated frequency as a fraction of omega_nu")
    p.add_argument("--wr", type=float, default=None,
                   help="explicit fundamental frequency in rad/s")
    p.add_argument("--xi", default="",
                   help="per-mode damping, comma separated (default zeros)")
    p.add_argument("--use-printed-coefficients", action="store_true",
                   help="force the stored three-digit coefficient tables")
    p.add_argument("--output", help="write the controller JSON here")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("simulate", help="closed-loop tracking simulation")
    _add_plant_arguments(p)
    p.add_argument("--controller", required=True, help="controller JSON file")
    p.add_argument("--ref", choices=("sine", "sawtooth", "square"),
                   default="sine")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--timeseries-csv", help="also write t,r,y,u,e samples")
    p.add_argument("--output", help="write the metrics JSON here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("margins", help="stability margins of the tuned loop")
    _add_plant_arguments(p)
    p.add_argument("--controller", required=True, help="controller JSON file")
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--bode-csv", help="write loop Bode samples here")
    p.add_argument("--nyquist-csv", help="write loop Nyquist samples here")
    p.add_argument("--output", help="write the margin JSON here")
    p.set_defaults(func=_cmd_margins)

    p = sub.add_parser("reproduce",
                       help="re-derive the built-in reference tables")
    p.add_argument("--subset", choices=("all", "acceptance", "tables"),
                   default="all",
                   help="which closed-loop scenarios to rerun")
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--report-name", default="reproduction")
    p.add_argument("--output", help="write the summary JSON here")
    p.set_defaults(func=_cmd_reproduce)

    return parser


_SUBCOMMANDS = ("classify", "identify", "tune", "simulate", "margins",
                "reproduce")


def _apply_config(argv: list[str]) -> list[str]:
    """Fold config-file values in as defaults; explicit flags still win.

    Config values are inserted right after the subcommand token, so any
    flag repeated on the command line overrides them (argparse keeps the
    last occurrence).
    """
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    path = argv[idx + 1]
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    command = next((a for a in argv if a in _SUBCOMMANDS), None)
    if command is None or command not in cp:
        return argv
    extra: list[str] = []
    for key, value in cp[command].items():
        flag = "--" + key.replace("_", "-")
        if value.strip().lower() in ("true", "yes", "on"):
            extra.append(flag)
        elif value.strip().lower() in ("false", "no", "off"):
            continue
        else:
            extra.extend([flag, value])
    pos = argv.index(command) + 1
    return argv[:pos] + extra + argv[pos:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config(argv)
    except UsageError as exc:
        json.dump({"error": "usage", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    out_dir = Path(args.out_dir or os.environ.get("PMRTUNE_OUT_DIR", "."))
    step_env = os.environ.get("PMRTUNE_STEP")
    if getattr(args, "step", None) is None and hasattr(args, "step"):
        args.step = float(step_env) if step_env else 1e-3

    try:
        return args.func(args, out_dir)
    except UsageError as exc:
        json.dump({"error": "usage", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
