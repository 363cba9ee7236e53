"""fp-label: add FP/SDR benchmark labels to a JSONL beamforming dataset.

Exit codes: 0 all samples labeled, 1 validation error, 2 some samples
left unlabeled (summary still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .labeling import label_dataset
from .solver import FpConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fp-label",
        description="Label RSMA datasets with FP/SDR benchmark solutions",
    )
    parser.add_argument("--in", dest="in_path", required=True,
                        help="input JSONL dataset")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output JSONL path")
    parser.add_argument("--tol", type=float, default=1e-5,
                        help="WSR convergence threshold of the outer loop")
    parser.add_argument("--max-iters", type=int, default=30,
                        help="outer iteration cap")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel worker processes")
    return parser


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        config = FpConfig(tol=args.tol, max_iters=args.max_iters)
        if args.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        summary = label_dataset(args.in_path, args.out_path, config,
                                jobs=args.jobs)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary.to_dict(), indent=1))
    return 0 if summary.failed == 0 else 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
