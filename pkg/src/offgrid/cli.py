"""Command line entry point: ``offgrid <experiment> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offgrid",
                                description="Random-feature certificate experiments.")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=None, help="output directory (default results/<experiment>)")
        sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        sp.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 2
    out = args.out or str(Path("results") / args.experiment)
    try:
        run(text, out, workers=max(1, args.workers), experiment=args.experiment)
    except ConfigError as e:
        print(f"{args.config}: {e}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
