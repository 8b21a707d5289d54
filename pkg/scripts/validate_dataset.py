#!/usr/bin/env python3
"""Independent dataset checker. Deliberately stdlib-only and separate from the
package so the sampling constraints are validated by a second code path.

Checks, for a {prefix}.{train,dev,test}.jsonl morphological dataset:
  * exact split sizes
  * train target surface forms (lowercased) disjoint from dev and test
  * per-split class imbalance ratio <= --max-ratio
"""

import argparse
import json
import sys
from collections import Counter


def load(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--prefix", required=True)
    ap.add_argument("--train", type=int, required=True)
    ap.add_argument("--dev", type=int, required=True)
    ap.add_argument("--test", type=int, required=True)
    ap.add_argument("--max-ratio", type=float, default=3.0)
    args = ap.parse_args()

    splits = {
        name: load(f"{args.prefix}.{name}.jsonl") for name in ("train", "dev", "test")
    }
    failures = []

    for name, want in (("train", args.train), ("dev", args.dev), ("test", args.test)):
        got = len(splits[name])
        if got != want:
            failures.append(f"{name} size {got} != requested {want}")

    forms = {
        name: {r["tokens"][r["target_index"]].lower() for r in recs}
        for name, recs in splits.items()
    }
    for other in ("dev", "test"):
        overlap = forms["train"] & forms[other]
        if overlap:
            failures.append(
                f"train/{other} share {len(overlap)} target forms, e.g. {sorted(overlap)[:5]}"
            )

    for name, recs in splits.items():
        counts = Counter(r["label"] for r in recs)
        if counts:
            lo, hi = min(counts.values()), max(counts.values())
            if hi > args.max_ratio * lo:
                failures.append(
                    f"{name} class imbalance {hi}:{lo} exceeds {args.max_ratio}:1 ({dict(counts)})"
                )

    if failures:
        for f in failures:
            print(f"FAIL {f}")
        return 1
    print("OK all sampling constraints satisfied")
    return 0


if __name__ == "__main__":
    sys.exit(main())
