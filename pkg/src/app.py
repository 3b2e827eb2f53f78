"""
Chemotactic pulse laboratory: command-line surface.

Commands:
  simulate   - macroscopic run (snapshots, pulse fit, flux and tumbling files)
  kinetic    - velocity-resolved run coupled to S and N
  speed      - analytic pulse speed, profile rates and Green kernel
  stability  - dispersion relation and critical mass of the homogeneous state
  cluster    - stationary cluster run against exp(-lambda |x - x_peak|)
  fit        - fit a pulse to an existing snapshot directory
  sweep      - cross product of parameter values on a worker pool
  runs       - list recorded runs (--sweep, --status) or show one (--id)

Run ledger: local SQLite database 'runs.db' (PULSELAB_DB)
"""

import argparse
import os
import sys
from pathlib import Path

from .config import OUT_DIR, get_presets, logger
from .decorators import exit_codes
from .errors import EXIT_OK, ConfigError
from .handlers import execute, show_runs
from .runconfig import RunConfig, apply_overrides, load_config, load_preset
from .utils import parse_overrides

COMMANDS = {
    "simulate": ("macro", "macroscopic drift-diffusion run"),
    "kinetic": ("kinetic", "kinetic run-and-tumble run"),
    "speed": ("speed", "analytic traveling pulse"),
    "stability": ("stability", "linear stability of the homogeneous state"),
    "cluster": ("cluster", "stationary cluster run"),
    "fit": ("fit", "fit a pulse to saved snapshots"),
    "sweep": ("sweep", "parameter sweep"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pulselab", description="Chemotactic traveling pulse laboratory.")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = commands.add_parser(name, help=help_text)
        source = sub.add_mutually_exclusive_group()
        source.add_argument("--config", help="YAML run configuration")
        source.add_argument("--preset", help=f"bundled preset ({', '.join(get_presets())})")
        sub.add_argument("--out", help="output directory")
        sub.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="section.key=value, repeatable",
        )
        sub.add_argument("--workers", type=int, help="sweep pool size")
        sub.add_argument("--seed", type=int, help="reserved; every run is deterministic")
        if name == "fit":
            sub.add_argument("--source", help="snapshot directory to fit (fit.source)")
    runs = commands.add_parser("runs", help="recorded runs")
    runs.add_argument("--sweep", help="only points of this sweep id")
    runs.add_argument("--status", choices=("ok", "failed", "partial"), help="only runs with this status")
    runs.add_argument("--id", type=int, dest="run_id", help="show one run with its summary")
    return parser


def resolve_config(args) -> tuple[RunConfig, str]:
    """Config file, preset or defaults, then overrides; the subcommand decides the mode."""
    if args.config:
        config, label = load_config(args.config), Path(args.config).stem
    elif args.preset:
        config, label = load_preset(args.preset), args.preset
    else:
        config, label = RunConfig(), "default"
    overrides = parse_overrides(args.override)
    overrides["mode"] = COMMANDS[args.command][0]
    if args.workers is not None:
        overrides["sweep.workers"] = args.workers
    if getattr(args, "source", None):
        overrides["fit.source"] = args.source
    return apply_overrides(config, overrides), label


@exit_codes
def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "runs":
        print("\n".join(show_runs(args.sweep, args.status, args.run_id)))
        return EXIT_OK
    if args.seed is not None:
        logger.warning("--seed is reserved and ignored; every run is deterministic")
    config, label = resolve_config(args)
    out = args.out or config.output.dir or os.path.join(OUT_DIR, f"{label}_{args.command}")
    logger.info("%s %r -> %s", args.command, label, out)
    summary = execute(config, out, label)
    print(summary.to_yaml(), end="")
    return EXIT_OK


def main(argv=None):
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
