"""Word-to-subword alignment: greedy wordpiece, span recovery, tokenization stats."""

from __future__ import annotations

import csv
from dataclasses import dataclass

DEFAULT_UNK = "[UNK]"
DEFAULT_CONT_PREFIX = "##"


class AlignmentError(ValueError):
    pass


@dataclass
class AlignedSentence:
    words: list
    spans: list  # (start, end) subword indices, exclusive end
    subwords: list | None = None

    def __post_init__(self):
        if len(self.words) != len(self.spans):
            raise AlignmentError("one span per word required")
        pos = 0
        for start, end in self.spans:
            if start != pos or end <= start:
                raise AlignmentError(f"spans must partition the subword axis: {self.spans}")
            pos = end
        if self.subwords is not None and pos != len(self.subwords):
            raise AlignmentError(
                f"spans cover {pos} subwords but {len(self.subwords)} are present"
            )


@dataclass
class TokenizationStats:
    fertility: float
    multi_rate: float
    standalone_start_rate: float | None = None


def wordpiece_tokenize(word, vocab, unk=DEFAULT_UNK, cont_prefix=DEFAULT_CONT_PREFIX):
    """Greedy longest-match-first wordpiece segmentation of a single word.

    Non-initial pieces are looked up with cont_prefix prepended. If any
    position cannot be matched the whole word degrades to [unk].
    """
    if not word:
        return [unk]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = cont_prefix + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return [unk]
        pieces.append(match)
        start = end
    return pieces


def align_words(words, vocab, unk=DEFAULT_UNK, cont_prefix=DEFAULT_CONT_PREFIX):
    """Tokenize each word independently and build the aligned sentence."""
    subwords = []
    spans = []
    for w in words:
        pieces = wordpiece_tokenize(w, vocab, unk, cont_prefix)
        spans.append((len(subwords), len(subwords) + len(pieces)))
        subwords.extend(pieces)
    return AlignedSentence(list(words), spans, subwords)


def spans_from_word_ids(word_ids):
    """Spans from a tokenizer's per-subword word-id stream (None = special token)."""
    spans = []
    current = None
    start = None
    for pos, wid in enumerate(word_ids):
        if wid is None:
            if current is not None:
                spans.append((start, pos))
                current, start = None, None
            continue
        if wid == current:
            continue
        if current is not None:
            if wid < current:
                raise AlignmentError(f"word ids not monotone at position {pos}")
            spans.append((start, pos))
        elif spans and wid <= _last_wid(spans, word_ids):
            raise AlignmentError(f"word id {wid} resumed non-contiguously at {pos}")
        current, start = wid, pos
    if current is not None:
        spans.append((start, len(word_ids)))
    return spans


def _last_wid(spans, word_ids):
    return word_ids[spans[-1][0]]


def tokenization_stats(sentences, start_symbol=None):
    """Fertility, multi-subword rate and (optionally) standalone-start rate."""
    total_words = 0
    total_subwords = 0
    multi = 0
    standalone = 0
    for s in sentences:
        total_words += len(s.spans)
        for start, end in s.spans:
            total_subwords += end - start
            if end - start >= 2:
                multi += 1
            if start_symbol is not None:
                if s.subwords is None:
                    raise AlignmentError("standalone-start rate needs subword strings")
                if s.subwords[start] == start_symbol:
                    standalone += 1
    if total_words == 0:
        raise AlignmentError("no words to compute stats over")
    return TokenizationStats(
        fertility=total_subwords / total_words,
        multi_rate=multi / total_words,
        standalone_start_rate=(standalone / total_words) if start_symbol is not None else None,
    )


def load_vocab(path):
    """Vocab file: one subword per line, UTF-8."""
    with open(path, encoding="utf-8") as fh:
        return {line.rstrip("\n") for line in fh if line.rstrip("\n")}


def write_stats_csv(path, rows):
    """rows: iterable of (corpus_name, TokenizationStats)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["corpus", "fertility", "multi_rate", "standalone_start_rate"])
        for name, st in rows:
            w.writerow(
                [
                    name,
                    f"{st.fertility:.6f}",
                    f"{st.multi_rate:.6f}",
                    "" if st.standalone_start_rate is None else f"{st.standalone_start_rate:.6f}",
                ]
            )
