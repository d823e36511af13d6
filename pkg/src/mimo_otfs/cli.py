"""Command-line entry point: ``mimo-otfs <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 selftest failure.  Every flag can also be set through an environment
variable ``MIMO_OTFS_<FLAG>`` (for example ``MIMO_OTFS_SEED``); flags win.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .blockmat import SingularBlockError
from .channel import ConfigurationError
from .complexity import ComplexityMismatch
from .harness import (
    NumericalFailure,
    apply_overrides,
    ber_csv,
    complexity_csv,
    env_overrides,
    load_config,
    run_ber_sweep,
    run_complexity_report,
    run_sinr_validation,
    selftest,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SELFTEST = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--trials", type=int, help="channel realizations per SNR point")
    common.add_argument("--threads", type=int, help="worker threads for trials")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mimo-otfs", description="MIMO-OTFS LZ/LM receiver experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ber-sweep", parents=[common], help="Monte Carlo BER over an SNR grid")
    sub.add_parser("sinr-validate", parents=[common], help="analytic vs simulated BER for LZ/LM")
    sub.add_parser("complexity-report", parents=[common], help="predicted and measured op counts")
    sub.add_parser("selftest", parents=[common], help="oracle and exactness suites")
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        env = env_overrides(environ)
        flags = {k: getattr(args, k) for k in ("config", "seed", "out", "trials", "threads")}
        merged = {**env, **{k: v for k, v in flags.items() if v is not None}}
        exp, cx = load_config(merged.pop("config", None))
        exp = apply_overrides(exp, **merged)
        cx = apply_overrides(cx, seed=merged.get("seed"), out=merged.get("out"))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "ber-sweep":
            _emit(ber_csv(run_ber_sweep(exp)), exp.out)
        elif args.command == "sinr-validate":
            _emit(ber_csv(run_sinr_validation(exp)), exp.out)
        elif args.command == "complexity-report":
            _emit(complexity_csv(run_complexity_report(cx)), cx.out)
        elif args.command == "selftest":
            return EXIT_OK if selftest() else EXIT_SELFTEST
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SingularBlockError, np.linalg.LinAlgError, ComplexityMismatch) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
