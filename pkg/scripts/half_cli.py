#!/usr/bin/env python3
"""
Decoupled Taint Analysis Command Line

Entry point for running workloads under decoupled taint analysis, sweeping
parameters, listing the workload catalog, and diffing reports.

USAGE EXAMPLES:
    # Run the downloader workload with default settings
    python scripts/half_cli.py run downloader --report reports/downloader.json

    # Run the heap spray workload against a preallocated shadow reservation
    python scripts/half_cli.py run heap_spray --scheme prealloc

    # Check a randomized program against the coupled oracle
    python scripts/half_cli.py run random:42 --verify --deterministic

    # Sweep buffer sizes on the memory-bound kernel and plot the trend
    python scripts/half_cli.py sweep membound --axis buffer_entries --values 1024,8192,65536 \\
        --output-dir reports/sweeps --plot reports/sweeps/membound.png

    # List workloads as JSON
    python scripts/half_cli.py list --json

    # Compare the taint results of two reports
    python scripts/half_cli.py diff reports/a.json reports/b.json

EXIT CODES:
    0 ok, 1 failure, 2 alert with --halt-on-alert, 3 address conflict, 4 oracle mismatch
"""

import argparse
import json
import sys
from pathlib import Path

from loguru import logger

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from analysis.config import (CHANNEL_CONFIG, DEFAULT_CATALOG_PATH, DEFAULT_OUTPUT_DIR, EXIT_CODES,
                             LOGGING_CONFIG, SCHEDULER_CONFIG, SHADOW_CONFIG, SWEEP_CONFIG)
from analysis.session import SCHEMES
from harness.experiment_config import ExperimentConfig, parse_switch
from harness.report_schema import load_report
from harness.runner import list_workloads, run_experiment
from harness.sweep import parse_values, run_sweep
from oracle.diff import compare
from parsers.workload_loader import WorkloadCatalog


def setup_logging(verbose: bool = False):
    """Configure logging for the command line"""
    if verbose:
        logger.remove()
        logger.add(sys.stderr, level="DEBUG")
    logger.add(LOGGING_CONFIG['file'], rotation=LOGGING_CONFIG['rotation'], level=LOGGING_CONFIG['level'],
               format=LOGGING_CONFIG['format'])


def add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    """Flags shared by `run` and `sweep`"""
    parser.add_argument("workload", help="Workload id from the catalog, or random:<seed>")
    parser.add_argument("--scheme", choices=SCHEMES, default="mirror", help="Shadow memory scheme")
    parser.add_argument("--buffer-entries", type=int, default=CHANNEL_CONFIG['buffer_entries'],
                        help="Words per record buffer")
    parser.add_argument("--buffers-per-thread", type=int, default=CHANNEL_CONFIG['buffers_per_thread'],
                        help="Record buffers per target thread")
    parser.add_argument("--sync-submit", type=parse_switch, default=True, metavar="on|off",
                        help="Submit record buffers at WAIT and SIGNAL")
    parser.add_argument("--record-only", action="store_true", help="Record without analysis")
    parser.add_argument("--deterministic", action="store_true",
                        help="Drain analysis after every submission; reports are byte-identical per seed")
    parser.add_argument("--seed", type=int, default=SCHEDULER_CONFIG['seed'], help="Scheduler seed")
    parser.add_argument("--throttle", type=int, default=0, help="Scheduler steps of delay after each RECV")
    parser.add_argument("--halt-on-alert", action="store_true", help="Stop the target at the first alert")
    parser.add_argument("--prealloc-base", type=lambda s: int(s, 0), default=SHADOW_CONFIG['prealloc_base'],
                        help="Reservation base address for --scheme prealloc")
    parser.add_argument("--spill-file", type=str, help="Shadow spill file (temporary file by default)")
    parser.add_argument("--alert-log", type=str, help="Write alerts as JSON lines to this file")
    parser.add_argument("--catalog", type=str, default=DEFAULT_CATALOG_PATH, help="Workload catalog path")


def config_from_args(args: argparse.Namespace, **overrides) -> ExperimentConfig:
    values = dict(
        workload=args.workload,
        scheme=args.scheme,
        buffer_entries=args.buffer_entries,
        buffers_per_thread=args.buffers_per_thread,
        sync_submit=args.sync_submit,
        record_only=args.record_only,
        seed=args.seed,
        throttle=args.throttle,
        deterministic=args.deterministic,
        halt_on_alert=args.halt_on_alert,
        prealloc_base=args.prealloc_base,
        spill_file=args.spill_file,
        alert_log=args.alert_log,
    )
    values.update(overrides)
    return ExperimentConfig(**values).validate()


def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args, report_path=args.report, oracle=args.oracle, verify=args.verify)
    result = run_experiment(config, WorkloadCatalog(args.catalog), dump_analysis_code=args.dump_analysis_code)
    if args.json:
        sys.stdout.write(result.report.to_json())
    if result.diff is not None and not result.diff.empty:
        logger.error(f"Oracle mismatch:\n{result.diff.summary()}")
    return result.exit_code


def cmd_sweep(args: argparse.Namespace) -> int:
    base = config_from_args(args)
    table = run_sweep(base, args.axis, parse_values(args.axis, args.values), WorkloadCatalog(args.catalog),
                      output_dir=args.output_dir)
    if args.plot:
        from src.visualizers.sweep_plot import SweepPlotter

        SweepPlotter(args.output_dir).plot(table, args.plot)
    if args.json:
        sys.stdout.write(table.to_json(orient='records', indent=2) + "\n")
    else:
        print(table.to_string(index=False))
    return EXIT_CODES['ok']


def cmd_list(args: argparse.Namespace) -> int:
    rows = list_workloads(WorkloadCatalog(args.catalog))
    if args.json:
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
    else:
        for row in rows:
            print(f"{row['id']:<20} {row['description']}")
    return EXIT_CODES['ok']


def cmd_diff(args: argparse.Namespace) -> int:
    diff = compare(load_report(args.report_a), load_report(args.report_b))
    print(diff.summary(limit=args.limit))
    return EXIT_CODES['ok'] if diff.empty else EXIT_CODES['oracle_mismatch']


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Decoupled dynamic taint analysis harness")
    parser.add_argument("--verbose", action="store_true", help="Debug logging on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one experiment")
    add_experiment_flags(run)
    run.add_argument("--report", type=str, help="Report output path")
    run.add_argument("--oracle", action="store_true", help="Run the coupled oracle instead of decoupled analysis")
    run.add_argument("--verify", action="store_true", help="Also run the oracle and exit 4 on any difference")
    run.add_argument("--dump-analysis-code", type=str, metavar="PATH", help="Write the analysis code listing")
    run.add_argument("--json", action="store_true", help="Print the report on stdout")
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", help="Run one experiment per axis value")
    add_experiment_flags(sweep)
    sweep.add_argument("--axis", choices=SWEEP_CONFIG['axes'], required=True, help="Parameter to vary")
    sweep.add_argument("--values", type=str, required=True, help="Comma-separated axis values")
    sweep.add_argument("--output-dir", type=str, default=DEFAULT_OUTPUT_DIR, help="Directory for reports")
    sweep.add_argument("--plot", type=str, metavar="PATH", help="Render the sweep figure")
    sweep.add_argument("--json", action="store_true", help="Print the summary table as JSON")
    sweep.set_defaults(handler=cmd_sweep)

    listing = commands.add_parser("list", help="List workloads")
    listing.add_argument("--catalog", type=str, default=DEFAULT_CATALOG_PATH, help="Workload catalog path")
    listing.add_argument("--json", action="store_true", help="Print the catalog as JSON")
    listing.set_defaults(handler=cmd_list)

    diff = commands.add_parser("diff", help="Compare the taint results of two reports")
    diff.add_argument("report_a", help="Reference report")
    diff.add_argument("report_b", help="Report to check")
    diff.add_argument("--limit", type=int, default=20, help="Differences to print")
    diff.set_defaults(handler=cmd_diff)
    return parser


def main(argv=None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except Exception as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_CODES['failure']


if __name__ == "__main__":
    sys.exit(main())
