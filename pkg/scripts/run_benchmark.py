#!/usr/bin/env python3
"""
Run a benchmark manifest end to end; same as ``flora run --manifest``.

From project root:
  python scripts/run_benchmark.py manifests/smoke.toml [--seed N] ...
"""
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from flora.cli import main as flora_main


def main():
    if len(sys.argv) < 2:
        print("usage: run_benchmark.py MANIFEST [flora run options]", file=sys.stderr)
        return 2
    return flora_main(["run", "--manifest", sys.argv[1], *sys.argv[2:]])


if __name__ == "__main__":
    sys.exit(main())
