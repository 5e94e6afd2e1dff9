"""Command line entry point: ``limitquant run|list-scenarios|validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ParseError, ValidationError
from .geometry import OutOfTube
from .harness import builtin_scenarios, resolve_scenario, run
from .reduction import GridTooNarrow

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (ParseError, ValidationError, OutOfTube, GridTooNarrow)


def _parser():
    p = argparse.ArgumentParser(prog="limitquant", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario file or built-in scenario")
    r.add_argument("scenario")
    r.add_argument("--out", default=None, help="directory for CSVs and the report")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--threads", type=int, default=1)
    sub.add_parser("list-scenarios", help="list the built-in scenarios")
    v = sub.add_parser("validate", help="parse and validate a scenario, print the resolved settings")
    v.add_argument("scenario")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "list-scenarios":
        for name, text in builtin_scenarios().items():
            sc = resolve_scenario(name)
            print(f"{name:24s} {sc.experiment:20s} {sc['scenario.description']}")
        return EXIT_OK
    try:
        sc = resolve_scenario(args.scenario)
        if args.cmd == "validate":
            for key in sorted(sc.values):
                mark = " " if key in sc.explicit else "*"
                print(f"{mark} {key} = {sc.values[key]!r}")
            print(f"ok: {sc.name} ({sc.experiment}), hash {sc.hash}; * marks defaults")
            return EXIT_OK
        report = run(sc, args.out, args.seed, max(1, args.threads))
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.text(), end="")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
