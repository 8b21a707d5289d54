"""Per-layer subword embedding tensors: the .swpe store, layer slicing, synthesis.

.swpe layout (little-endian): magic "SWPE", u32 version=1, u32 num_layers,
u32 hidden, u32 num_sentences; then per sentence: u32 num_subwords,
u32 num_words, num_words x (u32 start, u32 end), layer-major f32 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SWPE"
VERSION = 1

SUM_LAYERS = "sum"


class StoreFormatError(ValueError):
    pass


class BadMagicError(StoreFormatError):
    pass


class VersionMismatchError(StoreFormatError):
    pass


class TruncatedStoreError(StoreFormatError):
    pass


@dataclass
class LayerEmbeddings:
    """One sentence: [num_layers x num_subwords x hidden] floats plus word spans."""

    data: np.ndarray
    spans: list

    @property
    def num_layers(self):
        return self.data.shape[0]

    @property
    def num_subwords(self):
        return self.data.shape[1]

    @property
    def hidden(self):
        return self.data.shape[2]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"expected 3-D tensor, got shape {self.data.shape}")
        _check_partition(self.spans, self.num_subwords)


def _check_partition(spans, total):
    pos = 0
    for start, end in spans:
        if start != pos or end <= start:
            raise ValueError(f"spans do not partition [0, {total}): {spans}")
        pos = end
    if pos != total:
        raise ValueError(f"spans cover [0, {pos}) but there are {total} subwords")


def layer_view(emb, layer):
    """[num_subwords x hidden] slice of one layer, or the elementwise sum of all."""
    if layer == SUM_LAYERS:
        out = emb.data[0].copy()
        for i in range(1, emb.num_layers):
            out += emb.data[i]
        return out
    layer = int(layer)
    if not 0 <= layer < emb.num_layers:
        raise IndexError(f"layer {layer} out of range [0, {emb.num_layers})")
    return emb.data[layer]


def write_store(path, sentences, num_layers=None, hidden=None):
    if sentences:
        num_layers = sentences[0].num_layers
        hidden = sentences[0].hidden
    elif num_layers is None or hidden is None:
        raise ValueError("empty store needs explicit num_layers and hidden")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, num_layers, hidden, len(sentences)))
        for s in sentences:
            if s.num_layers != num_layers or s.hidden != hidden:
                raise ValueError("mixed tensor shapes in one store")
            fh.write(struct.pack("<II", s.num_subwords, len(s.spans)))
            for start, end in s.spans:
                fh.write(struct.pack("<II", start, end))
            fh.write(np.ascontiguousarray(s.data, dtype="<f4").tobytes())


def read_store(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic in {path}")
    if len(data) < 20:
        raise TruncatedStoreError(f"truncated header in {path}")
    version, num_layers, hidden, count = struct.unpack_from("<IIII", data, 4)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported store version {version}")
    off = 20
    sentences = []
    for _ in range(count):
        if off + 8 > len(data):
            raise TruncatedStoreError(f"truncated sentence header in {path}")
        n_sub, n_words = struct.unpack_from("<II", data, off)
        off += 8
        if off + 8 * n_words > len(data):
            raise TruncatedStoreError(f"truncated span table in {path}")
        spans = [
            struct.unpack_from("<II", data, off + 8 * i) for i in range(n_words)
        ]
        off += 8 * n_words
        size = num_layers * n_sub * hidden
        if off + 4 * size > len(data):
            raise TruncatedStoreError(f"truncated payload in {path}")
        tensor = (
            np.frombuffer(data, dtype="<f4", count=size, offset=off)
            .reshape(num_layers, n_sub, hidden)
            .copy()
        )
        off += 4 * size
        sentences.append(LayerEmbeddings(tensor, [tuple(s) for s in spans]))
    return sentences


@dataclass
class SignalSpec:
    """Label-dependent direction planted in a chosen subword of the target word.

    position: "first", "last", "all" or "none" (none -> pure noise, chance-level).
    """

    num_classes: int = 3
    position: str = "last"
    strength: float = 8.0
    layer: int | None = None  # None plants the signal at every layer

    def __post_init__(self):
        if self.position not in ("first", "last", "all", "none"):
            raise ValueError(f"invalid signal position {self.position!r}")


@dataclass
class SynthResult:
    sentences: list  # LayerEmbeddings
    records: list  # dataset dicts {tokens, target_index, label}


def synth_store(seed, num_sentences, words_per_sentence, fertility_distribution,
                num_layers, hidden, signal, direction_seed=None):
    """Deterministic synthetic store plus a matching word-classification dataset.

    fertility_distribution maps subwords-per-word to probability.
    Record i corresponds to sentence i of the store. Splits of one task must
    share direction_seed so the planted class directions agree.
    """
    items = sorted(fertility_distribution.items())
    fert_vals = np.array([k for k, _ in items])
    fert_probs = np.array([p for _, p in items], dtype=np.float64)
    if (fert_probs < 0).any() or abs(fert_probs.sum() - 1.0) > 1e-9 or (fert_vals < 1).any():
        raise ValueError("fertility distribution must be probabilities over ints >= 1")
    rng = np.random.default_rng(seed)
    dir_rng = np.random.default_rng(seed if direction_seed is None else direction_seed)
    directions = dir_rng.standard_normal((signal.num_classes, hidden))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    sentences = []
    records = []
    for si in range(num_sentences):
        ferts = rng.choice(fert_vals, size=words_per_sentence, p=fert_probs)
        spans = []
        pos = 0
        for f in ferts:
            spans.append((pos, pos + int(f)))
            pos += int(f)
        data = rng.standard_normal((num_layers, pos, hidden)).astype(np.float32)
        target = int(rng.integers(words_per_sentence))
        label = int(rng.integers(signal.num_classes))
        if signal.position != "none":
            start, end = spans[target]
            if signal.position == "first":
                idx = [start]
            elif signal.position == "last":
                idx = [end - 1]
            else:
                idx = list(range(start, end))
            layers = range(num_layers) if signal.layer is None else [signal.layer]
            for li in layers:
                for j in idx:
                    data[li, j] += (signal.strength * directions[label]).astype(np.float32)
        sentences.append(LayerEmbeddings(data, spans))
        records.append(
            {
                "tokens": [f"w{si}_{wi}" for wi in range(words_per_sentence)],
                "target_index": target,
                "label": f"c{label}",
            }
        )
    return SynthResult(sentences, records)
