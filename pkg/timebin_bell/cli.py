"""Command-line interface: predict, verify, simulate, analyze and reproduce."""

from __future__ import annotations

import argparse
import asyncio
from collections.abc import Callable, Sequence
import logging
import math
import os
from pathlib import Path
import sys
from typing import Any

import colorlog
import numpy as np

from . import bell, quantum
from .analysis import (
    async_load_streams,
    delay_histogram,
    fringe_scan_from_streams,
    combined_singles_histogram,
    full_pipeline,
)
from .config import load_config
from .const import (
    DEFAULT_DETECTOR_EFFICIENCY,
    DEFAULT_ORACLE_RESOLUTION,
    DEFAULT_PAIR_PROB,
    DEFAULT_RUN_DURATION,
    DEFAULT_VISIBILITY,
    EXIT_DATA_ERROR,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFICATION_FAILED,
    MODEL_LHV,
    MODEL_QUANTUM,
    ORACLE_TOLERANCE,
    TWO_PI,
)
from .exceptions import (
    DegenerateDataError,
    FitFailureError,
    InvalidArgumentError,
    TimetagFormatError,
)
from .fringe import fit_fringe
from .lhv import lhv_table_oracle
from .report import (
    SUMMARY_COLUMNS,
    delay_rows,
    format_summary,
    fringe_rows,
    singles_rows,
    summary_rows,
    to_csv,
    to_json,
    write_pipeline_outputs,
    write_text,
)
from .settings import build_fringe_plan, build_run_plan, optimal_chained_settings
from .simulator import simulate_plan
from .timebin_data import BellFunctional, ExperimentConfig, StateModel
from .timetag_codec import TimetagCodec, stream_filename

_LOGGER = logging.getLogger(__name__)

FORMAT_JSON = "json"
FORMAT_CSV = "csv"
FORMAT_HUMAN = "human"

VERDICT_IMPOSSIBLE = "no violation possible"
VERDICT_EXPECTED = "violation expected"
VERDICT_BELOW_CRITICAL = "no violation at this visibility"

_LOG_FORMAT = "%(log_color)s%(asctime)s %(levelname)-8s%(reset)s %(name)s: %(message)s"


def setup_logging(verbosity: int) -> None:
    """Colored stderr logging; -v → INFO, -vv → DEBUG."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(colorlog.ColoredFormatter(_LOG_FORMAT, datefmt="%H:%M:%S"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    seed = int(np.random.SeedSequence().entropy % (1 << 32))
    _LOGGER.warning("No --seed given; using seed %d", seed)
    return seed


def _seed_line(args: argparse.Namespace) -> str:
    # Deterministic commands echo the seed only when one was given
    return f"\nseed: {args.seed}" if args.seed is not None else ""


def _threads(args: argparse.Namespace) -> int | None:
    return args.threads or os.cpu_count()


def _emit(
    args: argparse.Namespace,
    data: dict[str, Any],
    rows: Sequence[dict[str, Any]],
    human: str,
    columns: Sequence[str] | None = None,
) -> None:
    if args.format == FORMAT_JSON:
        text = to_json(data)
    elif args.format == FORMAT_CSV:
        text = to_csv(rows, columns)
    else:
        text = human
    sys.stdout.write(text.rstrip("\n") + "\n")


# ── commands ─────────────────────────────────────────────────────────────────


def cmd_predict(args: argparse.Namespace) -> int:
    n, visibility = args.n, args.visibility
    limits = bell.bounds(n)
    s_qm = quantum.qm_chained_chsh(n)
    if s_qm <= limits.timebin_chsh:
        verdict = VERDICT_IMPOSSIBLE
    elif visibility * s_qm > limits.timebin_chsh:
        verdict = VERDICT_EXPECTED
    else:
        verdict = VERDICT_BELOW_CRITICAL
    data = {
        "n": n,
        "visibility": visibility,
        "s_qm": s_qm,
        "s_lhv": limits.timebin_chsh,
        "s_classical": limits.classical_chsh,
        "ch_interval": list(limits.ch_interval),
        "ch_qm": quantum.qm_chained_ch(n),
        "v_s_qm": visibility * s_qm,
        "critical_visibility": quantum.critical_visibility(n),
        "verdict": verdict,
    }
    if args.seed is not None:
        data["seed"] = args.seed
    human = "\n".join(
        [
            f"N = {n}, V = {visibility:.4f}",
            f"S_QM            = {s_qm:.4f}",
            f"S_LHV (time-bin) = {limits.timebin_chsh:g}  (classical {limits.classical_chsh:g})",
            f"CH interval     = [{limits.ch_interval[0]:g}, {limits.ch_interval[1]:g}], "
            f"S_CH,QM = {data['ch_qm']:.4f}",
            f"V·S_QM          = {data['v_s_qm']:.4f}",
            f"V_cr            = {100 * data['critical_visibility']:.2f}%",
            f"verdict: {verdict}",
        ]
    )
    human += _seed_line(args)
    _emit(args, data, [data], human)
    return EXIT_OK


def cmd_lhv_verify(args: argparse.Namespace) -> int:
    grid = np.arange(args.grid) * TWO_PI / args.grid
    state = StateModel(1.0)
    worst = 0.0
    worst_at = (0.0, 0.0)
    cross_el = 0.0
    for alice in grid:
        for bob in grid:
            table = lhv_table_oracle(alice, bob, args.resolution, args.method)
            deviation = table.max_deviation(quantum.joint_table(state, alice, bob))
            cross_el = max(cross_el, table.cross_el())
            if deviation > worst:
                worst, worst_at = deviation, (float(alice), float(bob))
    passed = worst < args.tolerance
    data = {
        "resolution": args.resolution,
        "method": args.method,
        "grid": args.grid,
        "max_deviation": worst,
        "worst_phases": list(worst_at),
        "max_cross_el": cross_el,
        "tolerance": args.tolerance,
        "passed": passed,
    }
    if args.seed is not None:
        data["seed"] = args.seed
    status = "PASS" if passed else "FAIL (oracle not converged at this resolution)"
    human = (
        f"{args.grid}x{args.grid} phase grid, resolution {args.resolution} ({args.method}): "
        f"max deviation {worst:.3e} at {worst_at}, E-L cells {cross_el:g}, "
        f"tolerance {args.tolerance:g} → {status}"
    )
    human += _seed_line(args)
    _emit(args, data, [data], human)
    if not passed:
        _LOGGER.error("LHV table deviates from quantum table by %.3e", worst)
        return EXIT_VERIFICATION_FAILED
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    limits = bell.bounds(args.n)
    data = limits.to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    code = EXIT_OK
    lines = [f"{key}: {value}" for key, value in data.items()]
    if args.verify:
        enumerated = bell.verify_classical_bound_by_enumeration(args.n)
        data["enumerated_classical_chsh"] = enumerated
        data["verified"] = enumerated == limits.classical_chsh
        lines.append(f"enumerated classical maximum: {enumerated:g} ({'ok' if data['verified'] else 'MISMATCH'})")
        if not data["verified"]:
            _LOGGER.error("Enumeration gave %g, expected %g", enumerated, limits.classical_chsh)
            code = EXIT_VERIFICATION_FAILED
    _emit(args, data, [data], "\n".join(lines))
    return code


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config, seed=args.seed, model=args.model)
    directory = Path(args.output) if args.output else config.output_directory
    file_format = args.file_format or config.output_format
    threads = args.threads or config.threads or os.cpu_count()

    streams = simulate_plan(config.experiment, config.run_plan(), threads=threads)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for stream in streams:
        path = directory / stream_filename(stream, file_format)
        TimetagCodec.write(stream, path)
        files.append(str(path))
    _LOGGER.info("Wrote %d timetag files to %s", len(files), directory)

    rows = [
        {"file": f, "label": s.label, "records": len(s)}
        for f, s in zip(files, streams, strict=True)
    ]
    data = {
        "seed": config.experiment.seed,
        "model": config.experiment.model,
        "runs": len(streams),
        "records": sum(len(s) for s in streams),
        "files": rows,
    }
    human = "\n".join(
        [f"seed {data['seed']}, {config.experiment.model} model, {len(streams)} runs"]
        + [f"{r['file']}: {r['records']} records" for r in rows]
    )
    _emit(args, data, rows, human)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    settings = None
    if args.config:
        settings = load_config(args.config).settings
    elif args.n:
        settings = optimal_chained_settings(args.n)

    streams = asyncio.run(async_load_streams(args.files))
    result = full_pipeline(streams, settings, threads=_threads(args))

    if args.output:
        directory = Path(args.output)
        write_pipeline_outputs(result, directory)
        config = streams[0].header.config
        for channel, histogram in combined_singles_histogram(streams).items():
            write_text(
                directory / f"singles_{channel.name.lower()}.csv",
                to_csv(singles_rows(histogram)),
            )
        span = math.ceil(2 * config.delta_t / config.tdc_bin) + 2 * config.window_half_width
        delays = None
        total = None
        for stream in streams:
            delays, counts = delay_histogram(stream, span)
            total = counts if total is None else total + counts
        write_text(directory / "delta_tau.csv", to_csv(delay_rows(delays, total, config.tdc_bin)))

    _emit(args, result.to_dict(), summary_rows(result), format_summary(result), SUMMARY_COLUMNS)
    return EXIT_OK


def _experiment(args: argparse.Namespace, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        visibility=args.visibility,
        seed=seed,
        model=args.model,
        pair_prob_per_pulse=args.pair_prob,
        detector_efficiency=args.efficiency,
    )


def cmd_reproduce(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    config = _experiment(args, seed)
    settings = optimal_chained_settings(args.n)
    plan = build_run_plan(settings, BellFunctional.CHSH, args.duration)
    result = full_pipeline(simulate_plan(config, plan, threads=_threads(args)), settings, threads=_threads(args))
    if args.output:
        write_pipeline_outputs(result, Path(args.output))
    _emit(args, result.to_dict(), summary_rows(result), format_summary(result), SUMMARY_COLUMNS)
    return EXIT_OK


def cmd_fringe(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    config = _experiment(args, seed)
    plan = build_fringe_plan(args.points, args.duration)
    scan = fringe_scan_from_streams(simulate_plan(config, plan, threads=_threads(args)))
    fit = fit_fringe(scan)
    rows = fringe_rows(scan, fit)
    if args.output:
        write_text(Path(args.output) / "fringe.csv", to_csv(rows))
    data = {"seed": seed, "fit": fit.to_dict(), "points": rows}
    human = (
        f"seed {seed}: V = {fit.visibility:.4f} ± {fit.std_errors['visibility']:.4f}, "
        f"φ0 = {fit.phase_offset:.4f}, C0 = {fit.amplitude:.1f}, "
        f"contrast {fit.contrast:.4f} (raw {fit.raw_contrast:.4f})"
    )
    _emit(args, data, rows, human)
    return EXIT_OK


# ── parser ───────────────────────────────────────────────────────────────────


def _n(value: str) -> int:
    n = int(value)
    if n < 2:
        raise argparse.ArgumentTypeError(f"n must be >= 2, got {n}")
    return n


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=[FORMAT_HUMAN, FORMAT_JSON, FORMAT_CSV], default=FORMAT_HUMAN)
    common.add_argument("--seed", type=int, default=None, help="Master seed, echoed in outputs.")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (default: all cores).")
    common.add_argument("-v", "--verbose", action="count", default=0)

    simulation = argparse.ArgumentParser(add_help=False)
    simulation.add_argument("--visibility", type=float, default=DEFAULT_VISIBILITY)
    simulation.add_argument("--model", choices=[MODEL_QUANTUM, MODEL_LHV], default=MODEL_QUANTUM)
    simulation.add_argument("--duration", type=float, default=DEFAULT_RUN_DURATION, help="Seconds per run.")
    simulation.add_argument("--pair-prob", type=float, default=DEFAULT_PAIR_PROB)
    simulation.add_argument("--efficiency", type=float, default=DEFAULT_DETECTOR_EFFICIENCY)
    simulation.add_argument("--output", help="Directory for CSV/JSON outputs.")

    parser = argparse.ArgumentParser(
        prog="timebin-bell",
        description="Time-bin entanglement chained Bell test simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", parents=[common], help="Quantum prediction and bounds.")
    p.add_argument("n", type=_n)
    p.add_argument("--visibility", type=float, default=1.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("lhv-verify", parents=[common], help="Check the LHV table against quantum mechanics.")
    p.add_argument("--resolution", type=int, default=DEFAULT_ORACLE_RESOLUTION)
    p.add_argument("--grid", type=int, default=8, help="Phases per side.")
    p.add_argument("--method", choices=["gauss", "midpoint"], default="gauss")
    p.add_argument("--tolerance", type=float, default=ORACLE_TOLERANCE)
    p.set_defaults(func=cmd_lhv_verify)

    p = sub.add_parser("bounds", parents=[common], help="Classical, time-bin and CH bounds.")
    p.add_argument("n", type=_n)
    p.add_argument("--verify", action="store_true", help="Confirm the classical bound by enumeration.")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", parents=[common], help="Write timetag files for a configured run plan.")
    p.add_argument("config", type=Path)
    p.add_argument("--model", choices=[MODEL_QUANTUM, MODEL_LHV], default=None)
    p.add_argument("--output", help="Output directory (overrides the config).")
    p.add_argument("--file-format", choices=["ttb1", "csv"], default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="Bell analysis of timetag files.")
    p.add_argument("files", nargs="+", type=Path)
    p.add_argument("--config", type=Path, help="Config whose settings section applies.")
    p.add_argument("--n", type=_n, help="Assume optimal settings for this N.")
    p.add_argument("--output", help="Directory for report and plot-ready CSV files.")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser(
        "reproduce-table1",
        aliases=["reproduce"],
        parents=[common, simulation],
        help="Simulate and analyze the chained runs for N = 3, 4 or 5.",
    )
    p.add_argument("n", type=int, choices=[3, 4, 5])
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("fringe", parents=[common, simulation], help="Simulate a visibility scan and fit it.")
    p.add_argument("--points", type=int, default=16)
    p.set_defaults(func=cmd_fringe)

    return parser


_DATA_ERRORS = (DegenerateDataError, TimetagFormatError, FitFailureError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_USAGE
    setup_logging(args.verbose)

    command: Callable[[argparse.Namespace], int] = args.func
    try:
        return command(args)
    except InvalidArgumentError as err:
        _LOGGER.error("%s", err)
        return EXIT_USAGE
    except FitFailureError as err:
        _LOGGER.error("%s (diagnostics: %s)", err, err.diagnostics)
        return EXIT_DATA_ERROR
    except _DATA_ERRORS as err:
        _LOGGER.error("%s", err)
        return EXIT_DATA_ERROR
    except OSError as err:
        _LOGGER.error("%s", err)
        return EXIT_USAGE
