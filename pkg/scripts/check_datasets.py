#!/usr/bin/env python3
"""
Ingest the CSV datasets of a manifest and compare their shape with the
reference table (rows, columns, class sizes).

From project root:
  python scripts/check_datasets.py manifests/table.toml
"""
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from flora import REFERENCE_DATASETS, DataError, ExperimentManifest


def main():
    if len(sys.argv) != 2:
        print("usage: check_datasets.py MANIFEST", file=sys.stderr)
        return 2
    manifest = ExperimentManifest.load(sys.argv[1])
    mismatches = 0
    for spec in manifest.datasets:
        if spec.path is None:
            continue
        try:
            data = spec.load()
        except DataError as e:
            print(f"{spec.name}: {e}", file=sys.stderr)
            mismatches += 1
            continue
        got = (data.n_rows, data.n_features, tuple(sorted(data.class_counts(), reverse=True)))
        ref = REFERENCE_DATASETS.get(spec.name)
        if ref is None:
            print(f"{spec.name}: {got[0]} rows, {got[1]} columns, classes {got[2]} (no reference)")
            continue
        want = (ref.rows, ref.columns, tuple(sorted(ref.class_sizes, reverse=True)))
        # the reference counts the label column for some datasets
        ok = got[0] == want[0] and got[2] == want[2] and want[1] in (got[1], got[1] + 1)
        status = "ok" if ok else "MISMATCH"
        if not ok:
            mismatches += 1
        print(f"{spec.name}: {got[0]} rows, {got[1]} columns, classes {got[2]}; expected {want} -> {status}")
        for column, n in data.imputed:
            print(f"  imputed {n} cells in {column}")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
