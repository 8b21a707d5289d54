#!/usr/bin/env python3
"""End-to-end synthetic demo: synth a signal-on-last store, train first/last/attn
probes over it through the CLI, and print the aggregated results.

Usage: python scripts/run_synthetic_pipeline.py [workdir]
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def run(*argv):
    print("+", " ".join(argv))
    subprocess.run(argv, check=True)


def main():
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    workdir.mkdir(parents=True, exist_ok=True)
    prefix = str(workdir / "synthetic")
    run(sys.executable, "-m", "subpool.cli", "synth", "--seed", "1",
        "--out-prefix", prefix, "--signal", "last")
    manifest = {
        "tasks": [
            {
                "name": "synthetic-last",
                "dataset": {s: f"{prefix}.{s}.jsonl" for s in ("train", "dev", "test")},
                "store": {s: f"{prefix}.{s}.swpe" for s in ("train", "dev", "test")},
            }
        ],
        "layers": [1],
        "poolings": ["first", "last", "attn"],
        "seeds": [0, 1, 2],
    }
    manifest_path = workdir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    results = workdir / "results.jsonl"
    run(sys.executable, "-m", "subpool.cli", "train",
        "--manifest", str(manifest_path), "--results", str(results))
    by_pooling = {}
    for line in results.read_text().splitlines():
        r = json.loads(line)
        by_pooling.setdefault(r["pooling"], []).append(r["test_acc"])
    for pooling, accs in sorted(by_pooling.items()):
        print(f"{pooling:6s} mean test acc {sum(accs) / len(accs):.3f}  per-seed {accs}")


if __name__ == "__main__":
    main()
