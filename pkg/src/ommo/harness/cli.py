"""Command-line entry point.

    ommo run --config exp.ini [--out DIR]
    ommo verify --suite lemmas [--seed N]
    ommo sweep --config exp.ini --param T=64,128,256,512 [--out DIR]

Exit codes: 0 success, 2 config error, 3 numeric-oracle failure,
4 invariant failure. Failures print a JSON error report on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config, parse_value
from .experiment import NUMERIC_ERRORS, InvariantError, format_table, run_experiment, sweep
from .suites import SUITES, verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4


def _error(kind: str, exc: Exception, code: int, **extra) -> int:
    report = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    report.update(extra)
    print(json.dumps(report, indent=2, default=str), file=sys.stderr)
    return code


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigError(f"--param expects NAME=v1,v2,..., got {text!r}")
    name, vals = text.split("=", 1)
    values = parse_value(vals)
    values = values if isinstance(values, list) else [values]
    if not values:
        raise ConfigError("--param needs at least one value")
    return name.strip(), values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ommo", description="Online min-max optimization experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (default $OMMO_OUTPUT_DIR)")
    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("--suite", required=True, choices=sorted(SUITES))
    v.add_argument("--seed", type=int, default=0)
    s = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, help="NAME=v1,v2,... e.g. T=64,128,256")
    s.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            ledger = run_experiment(load_config(args.config), args.out)
            summary = ledger.summary()
            summary["bound"] = ledger.meta.get("bound", {})
            print(json.dumps(summary, indent=2, default=str))
        elif args.command == "verify":
            rep = verify(args.suite, args.seed)
            for name, p in rep["properties"].items():
                status = "ok" if p["violations"] == 0 else "FAIL"
                print(f"{status:4s} {name}: {p['violations']} violations / {p['checked']} checks")
            if not rep["passed"]:
                return _error("invariant", InvariantError(f"suite {args.suite} failed"),
                              EXIT_INVARIANT, witnesses=rep["witnesses"])
        else:
            name, values = _parse_param(args.param)
            rows = sweep(load_config(args.config), name, values, args.out)
            print(format_table(rows))
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except InvariantError as exc:
        return _error("invariant", exc, EXIT_INVARIANT, witnesses=exc.report)
    except NUMERIC_ERRORS as exc:
        return _error("numeric-oracle", exc, EXIT_NUMERIC)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
