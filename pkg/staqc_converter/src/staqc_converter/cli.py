"""Command-line entry point: staqc-converter convert --staqc DIR --out DIR --seed N."""

from __future__ import annotations

import argparse
import json
import sys

from .converter import ConversionError, convert


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"usage error: {message}", file=sys.stderr)
        raise SystemExit(1)


def main(argv=None) -> int:
    parser = _Parser(prog="staqc-converter")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("convert", help="convert an upstream StaQC directory to JSONL")
    p.add_argument("--staqc", required=True, help="directory with the upstream pickle files")
    p.add_argument("--out", required=True, help="output directory for JSONL files and manifest")
    p.add_argument("--seed", type=int, default=0, help="seed for the dev/eval split")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        result = convert(args.staqc, args.out, args.seed)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"pairs": result.counts, "skipped": result.skipped}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
