"""``dseprot`` command line: simulate, replay, run, estimate, analyze.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import config
from .analysis import analyze_trace, read_trace
from .models import MeasurementWindow, ModelKind, SystemParams, build_model
from .orchestrator import (
    TRACE_HEADER,
    Orchestrator,
    OrchestratorConfig,
    default_worker_configs,
    spawn_workers,
)
from .replay import ReplayConfig, ReplayError, replay
from .scenario import (
    CSV_HEADER,
    ScenarioConfig,
    parse_row,
    read_measurements_csv,
    simulate_case,
    write_measurements_csv,
)
from .solver import SingularSystemError, SolverOptions, estimate_window

log = logging.getLogger("dseprot")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("system parameters")
    g.add_argument("--r-load", type=float, help="load resistance per phase (ohm)")
    g.add_argument("--l-load", type=float, help="load inductance per phase (H)")
    g.add_argument("--r-ground", type=float, help="neutral grounding resistance (ohm)")
    g.add_argument("--f-nom", type=float, help="nominal frequency (Hz)")
    g.add_argument("--v-ll", type=float, help="nominal line-line voltage (V rms)")


def _add_estimator(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("estimator")
    g.add_argument("--window", type=int, help="samples per estimation window")
    g.add_argument("--dt", type=float, help="sample period (s)")
    g.add_argument("--sigma-v", type=float, help="voltage channel noise std (V)")
    g.add_argument("--sigma-i", type=float, help="current channel noise std (A)")
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--delta-j", type=float, help="convergence threshold on |d log J|")
    g.add_argument("--j-floor", type=float)
    g.add_argument("--damping", type=float)
    g.add_argument("--load-bound", type=float, help="unfaulted R, L kept within this factor of nominal")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dseprot", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="key = value settings file (flags take precedence)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a fault case and write a measurement CSV")
    p.add_argument("--case", choices=["I", "II", "III"], type=str.upper)
    p.add_argument("--fault", help="fault model for a custom case (e.g. FaultCA, 3P, 6)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--t-fault", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--fs", type=float, help="output sample rate (Hz)")
    p.add_argument("--internal-step", type=float)
    p.add_argument("--fault-conductance", type=float, help="override fault conductance (S)")
    p.add_argument("--line-r", type=float)
    p.add_argument("--line-l", type=float)
    p.add_argument("--noise-v", type=float)
    p.add_argument("--noise-i", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--source", choices=["ideal", "current-limited"])
    p.add_argument("--ilim", type=float, help="current clamp (A, instantaneous)")
    _add_params(p)

    p = sub.add_parser("replay", help="stream a measurement CSV to stdout at the sample rate")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--speed", type=float, help="1 = real time, 0 = no pacing")
    p.add_argument("--period", type=float, help="override the sample period (s)")

    p = sub.add_parser("run", help="run the orchestrator on samples from stdin")
    p.add_argument("--trace", type=Path, required=True, help="trace CSV output path")
    p.add_argument("--in", dest="input", type=Path, help="read samples from a file instead of stdin")
    p.add_argument("--hysteresis", type=int)
    p.add_argument("--min-confidence", type=float)
    p.add_argument("--workers", choices=["thread", "process"])
    p.add_argument("--realtime", action="store_true", default=None, help="apply the reply timeout")
    p.add_argument("--reply-timeout", type=float, help="seconds (default 2 sample periods)")
    _add_params(p)
    _add_estimator(p)

    p = sub.add_parser("estimate", help="fit one model to the last window of a CSV")
    p.add_argument("--model", required=True, help="model id 0-7 or name")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--at", type=float, help="use the window ending at the last sample with t <= AT")
    _add_params(p)
    _add_estimator(p)

    p = sub.add_parser("analyze", help="summarise a trace CSV")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--fault-time", type=float)
    p.add_argument("--threshold", type=float, help="blackout confidence threshold")
    p.add_argument("--window", type=int, help="window length used for the run (warm-up rows skipped)")
    p.add_argument("--csv", type=Path, help="write per-model statistics here")
    return ap


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    file_values = config.read_config_file(args.config) if args.config else None
    flags = {k: v for k, v in vars(args).items() if k in config.SETTINGS}
    return config.resolve_settings(file_values, flags)


def _params(s: dict[str, Any]) -> SystemParams:
    return SystemParams(s["r_load"], s["l_load"], s["r_ground"], s["f_nom"], s["v_ll"])


def _solver(s: dict[str, Any]) -> SolverOptions:
    return SolverOptions(s["max_iterations"], s["delta_j"], s["j_floor"], s["damping"])


def cmd_simulate(args: argparse.Namespace, s: dict[str, Any]) -> int:
    case = s["case"]
    if case and s["fault"]:
        raise UsageError("give either --case or --fault, not both")
    if case:
        from .scenario import CASES

        fault_kind = CASES[case.upper()]
        case = case.upper()
    elif s["fault"]:
        fault_kind = ModelKind.parse(s["fault"])
        case = "custom"
    else:
        raise UsageError("one of --case or --fault is required")
    cfg = ScenarioConfig(
        case=case,
        params=_params(s),
        line_R=s["line_r"],
        line_L=s["line_l"],
        fault_kind=fault_kind,
        fault_conductance=s["fault_conductance"],
        t_fault=s["t_fault"],
        t_end=s["t_end"],
        fs_out=s["fs"],
        internal_step=s["internal_step"],
        noise_sigma_v=s["noise_v"],
        noise_sigma_i=s["noise_i"],
        seed=s["seed"],
        source_mode=s["source"],
        I_limit=s["ilim"],
    )
    samples = simulate_case(cfg)
    path = write_measurements_csv(samples, args.out)
    fault = cfg.fault.kind.name if cfg.fault else "none"
    print(f"wrote {path}")
    print(f"rows: {len(samples)}  fs: {cfg.fs_out:g} Hz  fault: {fault} at t={cfg.t_fault:g} s  source: {cfg.source_mode}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, s: dict[str, Any]) -> int:
    cfg = ReplayConfig(args.input, s["speed"], s["period"])
    replay(cfg, sys.stdout)
    return EXIT_OK


def _stdin_samples(stream):
    header = ",".join(CSV_HEADER)
    for n, line in enumerate(stream, 1):
        line = line.strip()
        if not line or line == header:
            continue
        try:
            yield parse_row(line.split(","))
        except ValueError as exc:
            log.warning("input line %d skipped: %s", n, exc)


def cmd_run(args: argparse.Namespace, s: dict[str, Any]) -> int:
    ocfg = OrchestratorConfig(
        hysteresis_samples=s["hysteresis"],
        min_confidence=s["min_confidence"],
        reply_timeout=(s["reply_timeout"] or 2 * s["dt"]) if s["realtime"] else None,
    )
    wcfgs = default_worker_configs(
        window_N=s["window"],
        dt=s["dt"],
        params=_params(s),
        sigma_v=s["sigma_v"],
        sigma_i=s["sigma_i"],
        solver=_solver(s),
        load_bound_factor=s["load_bound"],
    )
    try:
        workers = spawn_workers(wcfgs, s["workers"])
    except OSError as exc:
        print(f"dseprot run: cannot start workers: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    stream = args.input.open() if args.input else sys.stdin
    out = sys.stdout
    try:
        with Orchestrator(workers, ocfg) as orch, args.trace.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for sample in _stdin_samples(stream):
                rec = orch.process(sample)
                writer.writerow(rec.csv_row())
                if rec.action_changed:
                    out.write(rec.trip_command() + "\n")
                    out.flush()
        if orch.latencies:
            lat = sorted(orch.latencies)
            log.info("processed %d samples, median latency %.1f us", len(lat), 1e6 * lat[len(lat) // 2])
    finally:
        if args.input:
            stream.close()
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace, s: dict[str, Any]) -> int:
    kind = ModelKind.parse(args.model)
    samples = read_measurements_csv(args.input)
    if args.at is not None:
        samples = [x for x in samples if x.t <= args.at + 1e-12]
    N = s["window"]
    if len(samples) < N:
        raise UsageError(f"need at least {N} rows, found {len(samples)}")
    spec = build_model(kind, N, _params(s), s["sigma_v"], s["sigma_i"], s["load_bound"])
    window = MeasurementWindow(tuple(samples[-N:]), s["dt"])
    est = estimate_window(spec, window, _solver(s))
    print(f"model = {kind.name}")
    print(f"t = {window.samples[-1].t!r}")
    print(f"J = {est.J!r}")
    print(f"dof = {est.dof}")
    print(f"confidence = {est.confidence!r}")
    print(f"iterations = {est.iterations}")
    print(f"converged = {str(est.converged).lower()}")
    for name, value in est.params_out.items():
        print(f"{name} = {value!r}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, s: dict[str, Any]) -> int:
    rows = read_trace(args.trace)
    summary = analyze_trace(rows, args.fault_time, s["threshold"], s["window"])
    print(summary.report())
    if args.csv:
        with args.csv.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(summary.stats_csv_rows())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "replay": cmd_replay,
    "run": cmd_run,
    "estimate": cmd_estimate,
    "analyze": cmd_analyze,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        settings = _settings(args)
    except (ValueError, OSError) as exc:
        print(f"dseprot: bad configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(f"dseprot {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReplayError, OSError, SingularSystemError) as exc:
        print(f"dseprot {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        # invalid parameter values surface from the dataclass validators
        print(f"dseprot {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
