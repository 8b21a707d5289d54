"""Command-line surface: sample, stats, synth, train, analyze, verify-fixtures.

Exit codes: 0 ok, 1 usage, 2 data error, 3 verification failure. Errors are a
single machine-readable line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import align, analysis, corpus, embed, probe

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_layer(value):
    if value == "sum":
        return "sum"
    layer = int(value)
    if not 0 <= layer <= 12:
        raise argparse.ArgumentTypeError("layer must be 0..12 or 'sum'")
    return layer


def build_parser():
    p = _Parser(prog="subpool", description="Subword pooling probing toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sample", help="materialize a probing dataset")
    ps.add_argument("--mode", choices=["morph", "tagging"], required=True)
    ps.add_argument("--format", choices=["conllu", "bio"], required=True)
    ps.add_argument("--input", required=True)
    ps.add_argument("--out-prefix", required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--train", type=int, default=2000)
    ps.add_argument("--dev", type=int, default=200)
    ps.add_argument("--test", type=int, default=200)
    ps.add_argument("--task", help="built-in task name, e.g. finnish_case_noun")
    ps.add_argument("--language")
    ps.add_argument("--tag")
    ps.add_argument("--pos")
    ps.add_argument("--max-len", type=int, default=40)
    ps.add_argument("--max-chars", type=int, default=None)
    ps.add_argument("--dedup", action="store_true")
    ps.add_argument("--label-field", choices=["upos", "ner"], default="upos")

    pt = sub.add_parser("stats", help="per-corpus tokenization statistics CSV")
    pt.add_argument("--out", required=True)
    pt.add_argument("--store", action="append", default=[],
                    help="name=path of a .swpe store (fertility and multi-rate from spans)")
    pt.add_argument("--conllu", action="append", default=[],
                    help="name=path of a CoNLL-U file (needs --vocab)")
    pt.add_argument("--vocab")
    pt.add_argument("--start-symbol")
    pt.add_argument("--cont-prefix", default="##")
    pt.add_argument("--unk", default="[UNK]")

    py = sub.add_parser("synth", help="write a synthetic .swpe store + dataset")
    py.add_argument("--seed", type=int, required=True)
    py.add_argument("--out-prefix", required=True)
    py.add_argument("--train", type=int, default=300)
    py.add_argument("--dev", type=int, default=100)
    py.add_argument("--test", type=int, default=100)
    py.add_argument("--words", type=int, default=6)
    py.add_argument("--fertility", default="2:0.5,3:0.5",
                    help="comma list of subwords:prob")
    py.add_argument("--layers", type=int, default=3)
    py.add_argument("--hidden", type=int, default=32)
    py.add_argument("--classes", type=int, default=3)
    py.add_argument("--signal", choices=["first", "last", "all", "none"], default="last")
    py.add_argument("--strength", type=float, default=8.0)

    pr = sub.add_parser("train", help="run a manifest's experiment grid")
    pr.add_argument("--manifest", required=True)
    pr.add_argument("--results", required=True)
    pr.add_argument("--resume", action="store_true")
    pr.add_argument("--jobs", type=int, default=1)

    pa = sub.add_parser("analyze", help="derived statistics reports")
    pa.add_argument("--report", required=True,
                    choices=["expected-layer", "ratio", "pairwise", "macro"])
    pa.add_argument("--results", help="JSON-lines results file")
    pa.add_argument("--fixture", choices=["morph", "pos", "ner"])
    pa.add_argument("--model")
    pa.add_argument("--task")
    pa.add_argument("--pooling", action="append", default=None)
    pa.add_argument("--out", help="output CSV (default stdout)")

    pv = sub.add_parser("verify-fixtures", help="machine-check the shipped tables")
    return p


# ---------------------------------------------------------------- commands

def cmd_sample(args):
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    sentences = corpus.parse_conllu(text) if args.format == "conllu" else corpus.parse_bio_tsv(text)
    if args.mode == "morph":
        if args.task:
            tasks = corpus.load_morph_tasks()
            if args.task not in tasks:
                raise corpus.ParseError(f"unknown task {args.task!r}; known: {sorted(tasks)}")
            spec = tasks[args.task][0]
        elif args.tag and args.pos:
            spec = corpus.MorphTaskSpec(args.language or "", args.tag, args.pos)
        else:
            print("error: morph sampling needs --task or --tag/--pos", file=sys.stderr)
            return EXIT_USAGE
        ds = corpus.sample_morph(sentences, spec, (args.train, args.dev, args.test), args.seed)
    else:
        ds = corpus.sample_tagging(
            sentences, args.max_len, args.train, args.dev, args.test,
            args.dedup, args.seed, label_field=args.label_field,
            max_chars=args.max_chars,
        )
    for split in ("train", "dev", "test"):
        ds.write_jsonl(split, f"{args.out_prefix}.{split}.jsonl")
    print(json.dumps({"sizes": ds.sizes}))
    return EXIT_OK


def cmd_stats(args):
    rows = []
    for item in args.store:
        name, path = item.split("=", 1)
        sentences = embed.read_store(path)
        aligned = [align.AlignedSentence([""] * len(s.spans), s.spans) for s in sentences]
        rows.append((name, align.tokenization_stats(aligned)))
    if args.conllu and not args.vocab:
        print("error: --conllu needs --vocab", file=sys.stderr)
        return EXIT_USAGE
    vocab = align.load_vocab(args.vocab) if args.vocab else None
    for item in args.conllu:
        name, path = item.split("=", 1)
        with open(path, encoding="utf-8") as fh:
            sentences = corpus.parse_conllu(fh.read())
        aligned = [
            align.align_words(s.tokens, vocab, unk=args.unk, cont_prefix=args.cont_prefix)
            for s in sentences
        ]
        rows.append((name, align.tokenization_stats(aligned, start_symbol=args.start_symbol)))
    align.write_stats_csv(args.out, rows)
    return EXIT_OK


def _parse_fertility(text):
    dist = {}
    for item in text.split(","):
        k, v = item.split(":")
        dist[int(k)] = float(v)
    return dist


def cmd_synth(args):
    dist = _parse_fertility(args.fertility)
    signal = embed.SignalSpec(args.classes, args.signal, args.strength)
    sizes = {"train": args.train, "dev": args.dev, "test": args.test}
    for i, (split, n) in enumerate(sizes.items()):
        res = embed.synth_store(
            args.seed * 1000 + i, n, args.words, dist, args.layers, args.hidden,
            signal, direction_seed=args.seed,
        )
        embed.write_store(f"{args.out_prefix}.{split}.swpe", res.sentences)
        with open(f"{args.out_prefix}.{split}.jsonl", "w", encoding="utf-8") as fh:
            for rec in res.records:
                fh.write(json.dumps(rec) + "\n")
    print(json.dumps({"prefix": args.out_prefix, "sizes": sizes}))
    return EXIT_OK


def _load_task_data(task):
    data = {}
    for split in ("train", "dev", "test"):
        sentences = embed.read_store(task["store"][split])
        examples = corpus.ProbeDataset.read_jsonl(task["dataset"][split])
        if len(sentences) != len(examples):
            raise ValueError(
                f"store and dataset disagree on {split}: "
                f"{len(sentences)} sentences vs {len(examples)} records"
            )
        data[split] = list(zip(sentences, examples))
    return data


def _run_cell(task, layer, pooling, seeds, options):
    data = _load_task_data(task)
    spec = probe.ExperimentSpec(layer=layer, pooling=pooling, seeds=seeds, **options)
    result = probe.run_experiment(data, spec)
    records = []
    for sr in result.per_seed:
        records.append(
            {
                "task": task["name"],
                "model_store": task["store"]["train"],
                "layer": layer,
                "pooling": pooling,
                "seed": sr.seed,
                "dev_acc": sr.dev_acc,
                "test_acc": sr.test_acc,
                "params": result.param_count,
                "seconds": result.seconds / len(result.per_seed),
            }
        )
    return records


def cmd_train(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    layers = [(_parse_layer(str(x))) for x in manifest.get("layers", [6])]
    poolings = manifest.get("poolings", list(probe.POOLING_METHODS))
    seeds = manifest.get("seeds", [0, 1, 2])
    options = {
        k: manifest[k]
        for k in ("batch_size", "max_epochs", "patience", "lr")
        if k in manifest
    }
    if not manifest.get("tasks") or not layers or not poolings:
        print("error: manifest grid is empty", file=sys.stderr)
        return EXIT_USAGE
    done = set()
    if args.resume and os.path.exists(args.results):
        with open(args.results, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    r = json.loads(line)
                    done.add((r["task"], str(r["layer"]), r["pooling"], r["seed"]))
    cells = []
    for task in manifest["tasks"]:
        for layer in layers:
            for pooling in poolings:
                todo = [
                    s for s in seeds
                    if (task["name"], str(layer), pooling, s) not in done
                ]
                if todo:
                    cells.append((task, layer, pooling, todo))
    with open(args.results, "a", encoding="utf-8") as out:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_run_cell, *cell, options) for cell in cells]
                for fut in futures:
                    for rec in fut.result():
                        out.write(json.dumps(rec) + "\n")
                    out.flush()
        else:
            for cell in cells:
                for rec in _run_cell(*cell, options):
                    out.write(json.dumps(rec) + "\n")
                out.flush()
    print(json.dumps({"ran": len(cells), "skipped": len(done)}))
    return EXIT_OK


def _load_results_table(path):
    """Aggregate a results JSON-lines file: mean test accuracy over seeds."""
    acc = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            key = (r["task"], str(r["layer"]), r["pooling"])
            acc.setdefault(key, []).append(r["test_acc"])
    return {k: sum(v) / len(v) for k, v in acc.items()}


def _emit_csv(args, header, rows):
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(header)
    w.writerows(rows)
    if args.out:
        out.close()


def cmd_analyze(args):
    if args.report in ("pairwise", "macro"):
        if args.fixture:
            table = analysis.load_fixture_table(args.fixture)
        elif args.results:
            means = _load_results_table(args.results)
            rows = {}
            for (task, _layer, pooling), v in means.items():
                rows.setdefault((task, "results"), {})[pooling] = v * 100.0
            table = analysis.ResultTable(rows)
        else:
            print("error: analyze needs --fixture or --results", file=sys.stderr)
            return EXIT_USAGE
        if args.report == "macro":
            value = analysis.macro_average(table, model=args.model, methods=args.pooling)
            _emit_csv(args, ["model", "macro_accuracy"], [[args.model or "all", f"{value:.4f}"]])
            return EXIT_OK
        model = args.model or table.models()[0]
        methods = args.pooling or list(analysis.POOLING_METHODS)
        matrix = analysis.pairwise_matrix(table, model, methods=methods)
        rows = [
            [r, c, f"{matrix[(r, c)].mean_ratio:.6f}",
             f"{matrix[(r, c)].p:.6g}", int(matrix[(r, c)].significant)]
            for r in methods for c in methods
        ]
        _emit_csv(args, ["row", "column", "mean_ratio", "p", "significant"], rows)
        return EXIT_OK

    if not args.results:
        print("error: this report needs --results", file=sys.stderr)
        return EXIT_USAGE
    means = _load_results_table(args.results)
    if args.report == "expected-layer":
        rows = []
        groups = {}
        for (task, layer, pooling), v in means.items():
            if layer == "sum":
                continue  # excluded from the expected-layer formula
            groups.setdefault((task, pooling), {})[int(layer)] = v
        for (task, pooling), by_layer in sorted(groups.items()):
            profile = [by_layer[i] for i in sorted(by_layer)]
            rows.append([task, pooling, f"{analysis.expected_layer(profile):.4f}"])
        _emit_csv(args, ["task", "pooling", "expected_layer"], rows)
        return EXIT_OK
    # ratio report: last/first per layer
    groups = {}
    for (task, layer, pooling), v in means.items():
        if pooling in ("first", "last"):
            groups.setdefault(task, {}).setdefault(str(layer), {})[pooling] = v
    rows = []
    for task, by_layer in sorted(groups.items()):
        for layer, vals in sorted(by_layer.items()):
            if "first" in vals and "last" in vals:
                pts = analysis.last_first_ratio([vals["last"]], [vals["first"]], [layer])
                ratio = pts[0].ratio
                rows.append([task, layer, "flagged" if ratio is None else f"{ratio:.6f}"])
    _emit_csv(args, ["task", "layer", "last_first_ratio"], rows)
    return EXIT_OK


def cmd_verify_fixtures(args):
    claims = analysis.verify_fixture_claims()
    ok = True
    for c in claims:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.details}")
        ok = ok and c.passed
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "sample": cmd_sample,
        "stats": cmd_stats,
        "synth": cmd_synth,
        "train": cmd_train,
        "analyze": cmd_analyze,
        "verify-fixtures": cmd_verify_fixtures,
    }
    try:
        return handlers[args.command](args)
    except (corpus.ParseError, corpus.CannotSatisfySizesError,
            embed.StoreFormatError, align.AlignmentError,
            FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
