"""swpe-extract: dump encoder hidden states for a JSON-lines dataset."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import ExtractionJob, extract


def build_parser():
    p = argparse.ArgumentParser(prog="swpe-extract", description=__doc__)
    p.add_argument("--model", required=True,
                   help="checkpoint name or local path, e.g. bert-base-multilingual-cased")
    p.add_argument("--input", required=True, help="JSON-lines dataset with a 'tokens' field")
    p.add_argument("--output", required=True, help=".swpe output path")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-positions", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    job = ExtractionJob(
        model_name=args.model,
        input_path=args.input,
        output_path=args.output,
        batch_size=args.batch_size,
        device=args.device,
        max_positions=args.max_positions,
    )
    try:
        stats = extract(job)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(
        f"sentences={stats.num_sentences} skipped={stats.num_skipped} "
        f"fertility={stats.fertility:.4f} multi_rate={stats.multi_rate:.4f} "
        f"unk_substituted={stats.num_unk_substituted}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
