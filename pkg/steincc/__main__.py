"""
Main entry point for steincc
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from steincc import __version__
from steincc.config import ENV_PREFIX, EXPERIMENTS, KERNELS, METHODS, ExperimentSpec, env_overrides
from steincc.errors import ConfigurationError
from steincc.experiments import emit_csv, run_experiment
from steincc.logging_config import setup_logging

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _ArgumentParser(argparse.ArgumentParser):
    """argparse parser that reports usage errors with exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="steincc",
        description="Run kernelized complete-conditional Stein discrepancy experiments and write CSV results.",
        epilog=f"Every experiment flag can also be set with an environment variable, e.g. {ENV_PREFIX}N_REPS=50.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    spec = parser.add_argument_group("experiment")
    spec.add_argument("--experiment", choices=EXPERIMENTS)
    spec.add_argument("--method", choices=METHODS)
    spec.add_argument("--kernel", choices=KERNELS)
    spec.add_argument("--dims", type=_int_list, help="comma-separated dimensions")
    spec.add_argument("--ns", type=_int_list, help="comma-separated sample sizes")
    spec.add_argument("--biases", type=_float_list, help="comma-separated acceptance biases (mwg-bias)")
    spec.add_argument("--n-reps", dest="n_reps", type=int)
    spec.add_argument("--alpha", type=float)
    spec.add_argument("--bootstrap-l", dest="bootstrap_l", type=int, help="wild-bootstrap replicates L")
    spec.add_argument("--n-y", dest="n_y", type=int, help="auxiliary draws per row and coordinate")
    spec.add_argument("--seed", type=int)
    spec.add_argument("--bandwidth", type=float, help="RBF bandwidth (KCC-SD default 1, KSD median heuristic)")
    spec.add_argument("--bins", type=int)
    spec.add_argument("--epochs", type=int)
    spec.add_argument("--learning-rate", dest="learning_rate", type=float)
    spec.add_argument("--iterations", type=int)
    spec.add_argument("--burn-in", dest="burn_in", type=int)
    spec.add_argument("--thin", type=int)
    spec.add_argument("--threads", type=int)
    spec.add_argument("--no-timing", dest="record_time", action="store_const", const=False,
                      help="write 0 for wall time so identical seeds give identical files")

    run = parser.add_argument_group("output")
    run.add_argument("--config", type=Path, default=os.environ.get(f"{ENV_PREFIX}CONFIG"),
                     help="TOML file with experiment settings")
    run.add_argument("--out", default=os.environ.get(f"{ENV_PREFIX}OUT", "-"),
                     help="CSV destination ('-' for stdout)")
    run.add_argument("--log-level", default=os.environ.get(f"{ENV_PREFIX}LOG_LEVEL", "INFO"))
    run.add_argument("--log-file", type=Path, default=os.environ.get(f"{ENV_PREFIX}LOG_FILE"))
    return parser


SPEC_ARGS = (
    "experiment", "method", "kernel", "dims", "ns", "biases", "n_reps", "alpha", "bootstrap_l", "n_y",
    "seed", "bandwidth", "bins", "epochs", "learning_rate", "iterations", "burn_in", "thin", "threads",
    "record_time",
)


def resolve_spec(args: argparse.Namespace, environ=None) -> ExperimentSpec:
    """
    Merge settings: defaults < TOML file < environment < command line

    Raises:
        ConfigurationError: If the merged settings are invalid
    """
    values: Dict[str, Any] = env_overrides(os.environ if environ is None else environ)
    values.update({name: getattr(args, name) for name in SPEC_ARGS if getattr(args, name) is not None})
    if args.config:
        return ExperimentSpec.load(Path(args.config), **values)
    return ExperimentSpec(**values)


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        log_file = Path(args.log_file) if args.log_file else None
        setup_logging(log_level=args.log_level, log_file=log_file, console_output=True)
    except ValueError as e:
        parser.error(str(e))

    logger = logging.getLogger("steincc.cli")

    try:
        spec = resolve_spec(args)
    except (ConfigurationError, TypeError) as e:
        logger.error(f"Invalid experiment settings: {e}")
        print(f"steincc: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        rows = run_experiment(spec)
        emit_csv(rows, args.out)
    except ConfigurationError as e:
        logger.error(f"Invalid experiment settings: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Experiment failed: {e}", exc_info=True)
        return EXIT_RUNTIME

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
