"""Command-line entry point.

Exit codes: 0 when every built-in check passes, 1 when the scenario ran but
a check failed, 2 on configuration or execution errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import SCENARIOS, ConfigError, validate_config
from .scenarios import CSV_COLUMNS, ScenarioError, run_scenario

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2

SCENARIO_HELP = {
    "linewidth_narrowing": "noisy linear runs below threshold; fitted emission FWHM vs C",
    "masing_threshold": "nonlinear runs across C = 1; emission-peak jump and limit cycle",
    "injection_power_sweep": "lock verdict vs injected power at a fixed detuning",
    "injection_frequency_sweep": "lock verdict vs detuning at a fixed injected power",
    "arnold_tongue": "lock map over power and detuning; boundary slope vs power",
    "single_run": "one trajectory dump plus its output spectrum",
}


def _columns_epilog():
    lines = ["CSV columns per scenario (frequencies in Hz, detunings are injected minus",
             "free-running frequency, p_inj in photons/s, beat_or_phase holds the locked",
             "phase in rad or the physical beat frequency in Hz):", ""]
    for scenario, files in CSV_COLUMNS.items():
        lines.append(f"  {scenario}")
        for name, cols in files.items():
            lines.append(f"    {name}: {', '.join(cols)}")
    lines += ["", "Every run also writes summary.json and run.log.",
              "Exit codes: 0 all checks passed, 1 a check failed, 2 execution error."]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="backaction-maser",
        description="Simulate a backaction-driven microwave maser and its injection locking.",
        epilog=_columns_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenario named in a config file",
                         epilog=_columns_epilog(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config", help="INI config with [run], [system], [sweep], [sim] sections")
    run.add_argument("--output-dir", help="override run.output_dir")
    run.add_argument("--seed", type=int, help="override sim.seed")
    run.add_argument("--jobs", type=int, help="worker processes for grid points (override sim.jobs)")
    run.add_argument("-q", "--quiet", action="store_true", help="only print the final verdict")
    val = sub.add_parser("validate", help="check a config file and report every problem")
    val.add_argument("config")
    sub.add_parser("list-scenarios", help="print the available scenario names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list-scenarios":
        for name in SCENARIOS:
            print(f"{name:27s} {SCENARIO_HELP[name]}")
        return EXIT_OK

    overrides = {}
    if args.command == "run":
        overrides = {"seed": args.seed, "jobs": args.jobs}
    try:
        cfg = validate_config(args.config, overrides)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == "validate":
        print(f"{args.config}: ok (scenario {cfg.scenario}, seed {cfg.sim.seed})")
        return EXIT_OK

    if not args.quiet:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        result = run_scenario(cfg, args.output_dir)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for name, check in sorted(result.summary["checks"].items()):
        print(f"{'PASS' if check['passed'] else 'FAIL'} {name}: {check['value']}")
    print(f"summary written to {result.output_dir / 'summary.json'}")
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED
