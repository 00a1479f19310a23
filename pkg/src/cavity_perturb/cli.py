"""``cavity-perturb scan --config configs/tilted_offset.toml --out results/``

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 output failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from cavity_perturb import __version__
from cavity_perturb.config import THREADS_ENV, resolve_threads
from cavity_perturb.datasets import emit_datasets
from cavity_perturb.exceptions import CavityPerturbError, ConfigError
from cavity_perturb.logger import get_logger, set_verbosity
from cavity_perturb.scan import run
from cavity_perturb.scan_config import parse_config

logger = get_logger("cavity_perturb.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavity-perturb",
        description="Frequency shifts and optomechanical couplings of a cavity with a tilted membrane.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    scan = commands.add_parser("scan", help="scan the membrane position and write CSV datasets")
    scan.add_argument("--config", type=Path, required=True, help="TOML scan configuration")
    scan.add_argument("--out", type=Path, default=None, help="output directory (default: output.directory)")
    scan.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREADS_ENV} or CPU count)")
    scan.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def _scan(args: argparse.Namespace) -> None:
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from exc
    cfg = parse_config(text)
    try:
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc), field="threads") from exc
    logger.info("scan config %s", args.config)
    result = run(cfg, threads)
    emit_datasets(result, cfg, args.out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        set_verbosity(True)
    try:
        if args.command == "scan":
            _scan(args)
    except CavityPerturbError as exc:
        logger.exception("%s failed: %s", args.command, exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
