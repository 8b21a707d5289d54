"""CoNLL-U / BIO-TSV ingestion and probing-dataset construction.

Sampling enforces the morphology constraints: target-word disjointness across
splits (on lowercased surface forms), a 3:1 class-imbalance cap per split, and
exact split sizes, all deterministic in the seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources

import csv
import io


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class CannotSatisfySizesError(ValueError):
    """Raised when a split cannot be filled; names the binding constraint."""

    def __init__(self, split, constraint):
        self.split = split
        self.constraint = constraint
        super().__init__(f"cannot satisfy sizes for split {split!r}: {constraint}")


@dataclass
class RawSentence:
    tokens: list
    upos: list | None = None
    feats: list | None = None  # per-token dict tag -> value
    ner: list | None = None

    def __post_init__(self):
        for name in ("upos", "feats", "ner"):
            ann = getattr(self, name)
            if ann is not None and len(ann) != len(self.tokens):
                raise ParseError(f"{name} length {len(ann)} != {len(self.tokens)} tokens")


@dataclass
class MorphTaskSpec:
    language: str
    tag: str
    pos: str
    classes: tuple = ()  # empty -> discovered from the corpus

    def __post_init__(self):
        if self.classes and len(self.classes) < 2:
            raise ValueError("a morphological task needs at least 2 classes")


@dataclass
class Example:
    tokens: list
    target_index: int | None = None
    label: str | None = None
    labels: list | None = None

    def to_record(self):
        rec = {"tokens": self.tokens}
        if self.labels is not None:
            rec["labels"] = self.labels
        else:
            rec["target_index"] = self.target_index
            rec["label"] = self.label
        return rec

    @classmethod
    def from_record(cls, rec):
        return cls(
            tokens=list(rec["tokens"]),
            target_index=rec.get("target_index"),
            label=rec.get("label"),
            labels=rec.get("labels"),
        )


@dataclass
class ProbeDataset:
    splits: dict = field(default_factory=dict)  # split name -> list[Example]

    @property
    def sizes(self):
        return {k: len(v) for k, v in self.splits.items()}

    def write_jsonl(self, split, path):
        with open(path, "w", encoding="utf-8") as fh:
            for ex in self.splits[split]:
                fh.write(json.dumps(ex.to_record(), ensure_ascii=False) + "\n")

    @staticmethod
    def read_jsonl(path):
        out = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(Example.from_record(json.loads(line)))
        return out


# ---------------------------------------------------------------- parsing

def parse_conllu(text):
    """Parse CoNLL-U text; multiword-token ranges and empty nodes are skipped."""
    sentences = []
    tokens, upos, feats = [], [], []

    def flush():
        if tokens:
            sentences.append(RawSentence(list(tokens), list(upos), list(feats)))
            tokens.clear(), upos.clear(), feats.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"expected 10 columns, got {len(cols)}", line=lineno)
        wid = cols[0]
        if "-" in wid or "." in wid:
            continue  # multiword range / empty node
        tokens.append(cols[1])
        upos.append(cols[3])
        feats.append(_parse_feats(cols[5], lineno))
    flush()
    return sentences


def _parse_feats(raw, lineno):
    if raw == "_" or not raw:
        return {}
    out = {}
    for item in raw.split("|"):
        if "=" not in item:
            raise ParseError(f"malformed FEATS item {item!r}", line=lineno)
        k, v = item.split("=", 1)
        out[k] = v
    return out


def serialize_conllu(sentences):
    lines = []
    for s in sentences:
        for i, tok in enumerate(s.tokens):
            upos = s.upos[i] if s.upos else "_"
            feats = "_"
            if s.feats and s.feats[i]:
                feats = "|".join(f"{k}={v}" for k, v in sorted(s.feats[i].items()))
            lines.append(
                "\t".join([str(i + 1), tok, "_", upos, "_", feats, "_", "_", "_", "_"])
            )
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_bio_tsv(text):
    """Blank-line-separated blocks of "token<TAB>tag" lines (WikiAnn style).

    A "lang:" prefix on tokens is stripped; orphan I-X tags are repaired to B-X.
    """
    sentences = []
    tokens, tags = [], []

    def flush():
        if tokens:
            sentences.append(RawSentence(list(tokens), ner=repair_bio(tags)))
            tokens.clear(), tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            flush()
            continue
        if "\t" not in line:
            raise ParseError("expected token<TAB>tag", line=lineno)
        token, tag = line.split("\t", 1)
        if ":" in token:
            prefix, rest = token.split(":", 1)
            if prefix.isalpha() and prefix.islower() and 2 <= len(prefix) <= 3 and rest:
                token = rest
        tokens.append(token)
        tags.append(tag.strip())
    flush()
    return sentences


def serialize_bio_tsv(sentences):
    blocks = []
    for s in sentences:
        blocks.append("\n".join(f"{t}\t{tag}" for t, tag in zip(s.tokens, s.ner)))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def repair_bio(tags):
    """Promote orphan I-X (after O, start, or a different type) to B-X."""
    out = []
    prev_type = None
    for tag in tags:
        if tag.startswith("I-"):
            typ = tag[2:]
            if prev_type != typ:
                tag = "B-" + typ
            prev_type = typ
        elif tag.startswith("B-"):
            prev_type = tag[2:]
        else:
            prev_type = None
        out.append(tag)
    return out


def bio_is_wellformed(tags):
    prev_type = None
    for tag in tags:
        if tag.startswith("I-"):
            if prev_type != tag[2:]:
                return False
        elif tag.startswith("B-"):
            prev_type = tag[2:]
            continue
        elif tag == "O":
            prev_type = None
            continue
        elif not tag.startswith("I-"):
            return False
        prev_type = tag[2:]
    return True


# ---------------------------------------------------------------- sampling

def _morph_candidates(sentences, spec):
    cands = []
    for si, s in enumerate(sentences):
        if s.upos is None or s.feats is None:
            raise ValueError("morphological sampling needs upos and feats annotations")
        for wi, tok in enumerate(s.tokens):
            if s.upos[wi] != spec.pos:
                continue
            value = s.feats[wi].get(spec.tag)
            if value is None:
                continue
            if spec.classes and value not in spec.classes:
                continue
            cands.append((si, wi, tok.lower(), value))
    return cands


def _select_with_cap(cands, size, rng, split):
    """Pick exactly `size` candidates with class ratio <= 3:1, or raise.

    Classes too rare to fit under the cap are dropped (mirrors rare-tag removal).
    Majority classes are downsampled uniformly at random.
    """
    by_class = {}
    for c in cands:
        by_class.setdefault(c[3], []).append(c)
    kept = sorted(by_class, key=lambda k: (-len(by_class[k]), k))
    while True:
        if len(kept) < 2:
            raise CannotSatisfySizesError(
                split, "fewer than 2 classes available under the 3:1 cap"
            )
        counts = {k: len(by_class[k]) for k in kept}
        min_avail = min(counts.values())
        chosen_m = None
        for m in range(min_avail, 0, -1):
            if len(kept) * m > size:
                continue
            if sum(min(c, 3 * m) for c in counts.values()) >= size:
                chosen_m = m
                break
        if chosen_m is None:
            kept = kept[:-1]  # drop the rarest class and retry
            continue
        sel = {k: min(counts[k], 3 * chosen_m) for k in kept}
        # trim overshoot from the currently largest classes, never below m
        while sum(sel.values()) > size:
            k = max(kept, key=lambda key: (sel[key], key))
            if sel[k] <= chosen_m:
                raise CannotSatisfySizesError(split, "3:1 class-imbalance cap")
            sel[k] -= 1
        picked = []
        for k in kept:
            pool = list(by_class[k])
            rng.shuffle(pool)
            picked.extend(pool[: sel[k]])
        rng.shuffle(picked)
        return picked


def sample_morph(sentences, spec, sizes, seed):
    """Build a (train, dev, test) morphological probing dataset.

    Target surface forms (lowercased) never cross splits; train claims
    competing forms first by being filled first.
    """
    cands = _morph_candidates(sentences, spec)
    if not cands:
        raise CannotSatisfySizesError("train", "no candidate target words in the corpus")
    groups = {}
    for c in cands:
        groups.setdefault(c[2], []).append(c)
    forms = sorted(groups)
    random.Random(f"{seed}:forms").shuffle(forms)
    form_iter = iter(forms)
    dataset = ProbeDataset()
    split_names = ("train", "dev", "test")
    for split, size in zip(split_names, sizes):
        pool = []
        attempt = 0
        last_err = None
        while True:
            while len(pool) < size:
                try:
                    pool.extend(groups[next(form_iter)])
                except StopIteration:
                    break
            if len(pool) < size:
                raise CannotSatisfySizesError(
                    split,
                    last_err.constraint if last_err is not None
                    else "not enough disjoint target words in the corpus",
                )
            try:
                rng = random.Random(f"{seed}:{split}:{attempt}")
                picked = _select_with_cap(pool, size, rng, split)
                break
            except CannotSatisfySizesError as err:
                last_err = err
                attempt += 1
                try:
                    pool.extend(groups[next(form_iter)])
                except StopIteration:
                    raise err from None
        dataset.splits[split] = [
            Example(
                tokens=list(sentences[si].tokens), target_index=wi, label=value
            )
            for si, wi, _, value in picked
        ]
    return dataset


def sample_tagging(sentences, max_len, max_train, dev, test, dedup, seed,
                   label_field="upos", max_chars=None):
    """Sequence-tagging dataset: length filter, optional dedup, disjoint splits.

    dev and test sizes are exact; train takes up to max_train of what remains.
    """
    filtered = []
    seen = set()
    for s in sentences:
        if len(s.tokens) > max_len:
            continue
        if max_chars is not None and sum(len(t) for t in s.tokens) > max_chars:
            continue
        labels = getattr(s, label_field)
        if labels is None:
            raise ValueError(f"sentences carry no {label_field} annotation")
        if dedup:
            key = tuple(s.tokens)
            if key in seen:
                continue
            seen.add(key)
        filtered.append(Example(tokens=list(s.tokens), labels=list(labels)))
    random.Random(f"{seed}:tagging").shuffle(filtered)
    if len(filtered) < dev + test + 1:
        raise CannotSatisfySizesError(
            "train", f"only {len(filtered)} sentences survive the filters, "
                     f"need more than {dev + test}"
        )
    train_size = min(max_train, len(filtered) - dev - test)
    dataset = ProbeDataset()
    dataset.splits["train"] = filtered[:train_size]
    dataset.splits["dev"] = filtered[train_size : train_size + dev]
    dataset.splits["test"] = filtered[train_size + dev : train_size + dev + test]
    return dataset


# ---------------------------------------------------------------- fixtures

def load_morph_tasks():
    """The 14 built-in <language, tag, POS> task specs."""
    text = resources.files("subpool.fixtures").joinpath("morph_tasks.csv").read_text("utf-8")
    tasks = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = f"{row['language']}_{row['tag']}_{row['pos']}".lower()
        tasks[key] = (
            MorphTaskSpec(row["language"], row["tag"], row["pos"]),
            int(row["num_classes"]),
        )
    return tasks
