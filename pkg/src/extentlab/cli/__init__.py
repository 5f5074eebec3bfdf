"""Command line entry point: ``extentlab fit|generate|analyze|simulate|report --config <path>``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
On failure a diagnostic file ``error_<command>.txt`` is written to the
output directory (or the current directory if that is unknown).
"""
from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from ..generate import EnsembleFormatError
from ..gp import CholeskyError
from ..model.sampler import SamplerError
from ..model.store import StoreFormatError
from .commands import COMMANDS, IdentityCheckFailed, MissingArtifact
from .config import default_threads, load_config
from .ingest import ValidationError, ingest_grid, ingest_stations

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

__all__ = ["main", "load_config", "ingest_stations", "ingest_grid", "ValidationError", "exit_code"]


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (StoreFormatError, EnsembleFormatError, MissingArtifact)):
        return EXIT_IO
    if isinstance(exc, (SamplerError, CholeskyError, np.linalg.LinAlgError, FloatingPointError,
                        IdentityCheckFailed, ArithmeticError)):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ValidationError, ValueError, KeyError, TypeError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extentlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override [run] seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $EXTENTLAB_THREADS or 1); results do not depend on it")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = Path.cwd()
    try:
        cfg = load_config(args.config, seed=args.seed)
        out_dir = cfg.output
        threads = default_threads(args.threads)
        result = COMMANDS[args.command](cfg, threads)
        print(f"{args.command}: " + ", ".join(f"{k}={v}" for k, v in result.items()))
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        code = exit_code(exc)
        print(f"extentlab {args.command}: error: {exc}", file=sys.stderr)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"error_{args.command}.txt").write_text(
                f"command: {args.command}\nexit code: {code}\nerror: {type(exc).__name__}: {exc}\n\n"
                + traceback.format_exc())
        except OSError:
            pass
        return code


if __name__ == "__main__":
    sys.exit(main())
