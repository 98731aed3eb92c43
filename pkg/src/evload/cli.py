"""Command line entry point: ``evload {run,expected,validate} CONFIG``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 infeasible sessions or sampling, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import scenario
from .core import fmt_number
from .errors import EvloadError

log = logging.getLogger("evload")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evload", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="key=value scenario file")
        sp.add_argument("--seed", type=int, help="override fleet.seed")
        sp.add_argument("--out-dir", help="override output.dir")
        sp.add_argument("--samples", type=int, help="override montecarlo.samples")
        sp.add_argument("-v", "--verbose", action="store_true", help="log written files")

    run = sub.add_parser("run", help="execute the configured cases")
    common(run)
    run.add_argument("--cases", help="comma list overriding run.cases")
    run.add_argument("--per-user", action="store_true", help="also write per-user DR schedules")

    exp = sub.add_parser("expected", help="analytic expected-demand curves only")
    common(exp)
    exp.add_argument("--emit-extended", action="store_true",
                     help="also write the unwrapped profile")

    val = sub.add_parser("validate", help="check a config and print the resolved settings")
    common(val)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = scenario.load_config(args.config).with_overrides(
            seed=args.seed, out_dir=args.out_dir, samples=args.samples
        )
        if args.command == "validate":
            for k, v in cfg.describe():
                print(f"{k}={fmt_number(v) if isinstance(v, float) else v}")
            return 0
        if args.command == "expected":
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
            report = scenario.RunReport()
            scenario.write_expected(cfg, report, emit_extended=args.emit_extended)
            path = cfg.out_dir / "summary.txt"
            scenario.write_summary({"status": "ok", **report.summary}, path)
            report.files.append(path)
        else:
            cases = scenario.parse_cases(args.cases) if args.cases else None
            if args.per_user:
                cfg = replace(cfg, per_user=True)
            report = scenario.run_cases(cfg, cases)
        for f in report.files:
            log.info("wrote %s", f)
        print(f"status=ok out_dir={cfg.out_dir}")
        return 0
    except EvloadError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
