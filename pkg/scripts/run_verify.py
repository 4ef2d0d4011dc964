#!/usr/bin/env python3
"""Run the verification registry over builtin models and collect reports.

Prints one terminal table per model and optionally writes the JSON report
next to it.  The quick budget exercises every check class; full only raises
the sample counts.
"""

import argparse
from pathlib import Path

from finslerkit.models import builtin_names
from finslerkit.verify import format_table, report_to_json, run_verification


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", nargs="*", default=None,
                    help="builtin model names (default: all of them)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", choices=("quick", "full"), default="quick")
    ap.add_argument("--out", type=Path, default=None,
                    help="directory to drop one JSON report per model into")
    args = ap.parse_args(argv)

    failures = []
    for name in args.models or builtin_names():
        report = run_verification(f"builtin:{name}", seed=args.seed, budget=args.budget)
        print(format_table(report))
        print()
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            path = args.out / f"{name}-seed{args.seed}-{args.budget}.json"
            path.write_text(report_to_json(report))
        if not report["all_passed"]:
            failures.append(name)
    if failures:
        print("models with failing checks:", ", ".join(failures))
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
