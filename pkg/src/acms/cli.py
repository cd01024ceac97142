"""Command-line entry point.

    acms <subcommand> --config <path> [--key value ...]

Subcommands: solve, convergence, decay, contrast, spectrum, diagnostics.
Any configuration key can be overridden on the command line.  The
ACMS_OUTPUT_DIR environment variable overrides the configured output
directory (command-line --output_dir wins over both).

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import NumericalError, UsageError
from .harness import (RunConfig, run_contrast_sweep, run_convergence,
                      run_decay, run_diagnostics, run_solve, run_spectrum)

COMMANDS = {
    "solve": run_solve,
    "convergence": run_convergence,
    "decay": run_decay,
    "contrast": run_contrast_sweep,
    "spectrum": run_spectrum,
    "diagnostics": run_diagnostics,
}


def _collect_overrides(extra):
    overrides = {}
    k = 0
    while k < len(extra):
        token = extra[k]
        if not token.startswith("--") or k + 1 >= len(extra):
            raise UsageError("arguments",
                             f"expected --key value pairs, got {token!r}")
        overrides[token[2:].replace("-", "_")] = extra[k + 1]
        k += 2
    return overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="acms",
        description="Multiscale skeleton FE benchmarks (NLOD/LOD/NLSD/LSD)")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key=value configuration file")
    args, extra = parser.parse_known_args(argv)

    try:
        config = RunConfig.from_file(args.config) if args.config else RunConfig()
        env_dir = os.environ.get("ACMS_OUTPUT_DIR")
        if env_dir:
            config.output_dir = env_dir
        config.apply_overrides(_collect_overrides(extra))
        config.validate()
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2

    try:
        COMMANDS[args.command](config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
