"""Run a pretrained encoder over a JSON-lines dataset and emit a .swpe store.

Subword tokenization is run on individual words, then the pieces are
assembled into one model input per sentence. That keeps gold word boundaries
intact: every word maps to a contiguous span of subword positions, and
special tokens ([CLS]/[SEP] or their SentencePiece equivalents) belong to no
word and are excluded from the spans.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .swpe import check_partition, write_swpe

log = logging.getLogger("swpe_extractor")


@dataclass
class ExtractionJob:
    model_name: str
    input_path: str
    output_path: str
    batch_size: int = 8
    device: str = "cpu"
    max_positions: int | None = None  # default: model position limit


@dataclass
class ExtractionStats:
    """Counts logged by the extractor; the probing toolkit's `stats` command on
    the emitted store must reproduce fertility and multi_rate exactly."""

    num_sentences: int = 0
    num_skipped: int = 0
    num_words: int = 0
    num_subwords: int = 0
    num_multi_words: int = 0
    num_unk_substituted: int = 0
    skipped_indices: list = field(default_factory=list)

    @property
    def fertility(self):
        return self.num_subwords / self.num_words if self.num_words else 0.0

    @property
    def multi_rate(self):
        return self.num_multi_words / self.num_words if self.num_words else 0.0


def read_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def tokenize_sentence(tokenizer, tokens, index, stats):
    """Per-word tokenization. Returns (piece_ids, spans over non-special positions)."""
    ids, spans = [], []
    for word in tokens:
        pieces = tokenizer.tokenize(word)
        if not pieces:
            log.warning("sentence %d: word %r tokenized to zero pieces; "
                        "substituting the unknown token", index, word)
            stats.num_unk_substituted += 1
            piece_ids = [tokenizer.unk_token_id]
        else:
            piece_ids = tokenizer.convert_tokens_to_ids(pieces)
        start = len(ids)
        ids.extend(piece_ids)
        spans.append((start, len(ids)))
        stats.num_words += 1
        stats.num_subwords += len(piece_ids)
        if len(piece_ids) > 1:
            stats.num_multi_words += 1
    return ids, spans


def special_affixes(tokenizer):
    """Special-token ids surrounding a single sequence, found by probing.

    Works across tokenizer families and library versions without relying on
    template-construction methods.
    """
    inner = tokenizer("x", add_special_tokens=False)["input_ids"]
    full = tokenizer("x", add_special_tokens=True)["input_ids"]
    if not inner:
        raise ValueError("probe text tokenized to nothing; cannot infer template")
    for i in range(len(full) - len(inner) + 1):
        if full[i : i + len(inner)] == inner:
            return full[:i], full[i + len(inner):]
    raise ValueError("could not locate the sequence inside the special template")


def load_model(job):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(job.model_name)
    model = AutoModel.from_pretrained(job.model_name, output_hidden_states=True)
    model.to(job.device)
    model.eval()
    return tokenizer, model


def extract(job, tokenizer=None, model=None):
    """Returns ExtractionStats; writes the .swpe store to job.output_path."""
    if tokenizer is None or model is None:
        tokenizer, model = load_model(job)
    max_positions = job.max_positions
    if max_positions is None:
        max_positions = int(getattr(model.config, "max_position_embeddings", 512))
    records = read_jsonl(job.input_path)
    stats = ExtractionStats()
    lead_ids, trail_ids = special_affixes(tokenizer)

    prepared = []  # (input_ids with specials, spans, offset of first word piece)
    for i, rec in enumerate(records):
        word_stats = ExtractionStats()
        ids, spans = tokenize_sentence(tokenizer, rec["tokens"], i, word_stats)
        if not ids:
            log.warning("sentence %d has no tokens; skipped", i)
            stats.num_skipped += 1
            stats.skipped_indices.append(i)
            continue
        full = lead_ids + ids + trail_ids
        if len(full) > max_positions:
            log.warning("sentence %d: %d positions exceed the limit %d; skipped",
                        i, len(full), max_positions)
            stats.num_skipped += 1
            stats.skipped_indices.append(i)
            continue
        lead = len(lead_ids)
        stats.num_sentences += 1
        stats.num_words += word_stats.num_words
        stats.num_subwords += word_stats.num_subwords
        stats.num_multi_words += word_stats.num_multi_words
        stats.num_unk_substituted += word_stats.num_unk_substituted
        prepared.append((full, spans, lead, len(ids)))

    sentences = []
    with torch.no_grad():
        for b0 in range(0, len(prepared), job.batch_size):
            batch = prepared[b0:b0 + job.batch_size]
            width = max(len(full) for full, _, _, _ in batch)
            pad_id = tokenizer.pad_token_id or 0
            input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
            mask = torch.zeros((len(batch), width), dtype=torch.long)
            for r, (full, _, _, _) in enumerate(batch):
                input_ids[r, : len(full)] = torch.tensor(full, dtype=torch.long)
                mask[r, : len(full)] = 1
            out = model(input_ids=input_ids.to(job.device),
                        attention_mask=mask.to(job.device))
            # embedding layer + one tensor per hidden layer
            layers = torch.stack(out.hidden_states, dim=0)  # [L, B, T, H]
            layers = layers.to(torch.float32).cpu().numpy()
            for r, (_, spans, lead, n_pieces) in enumerate(batch):
                tensor = layers[:, r, lead : lead + n_pieces, :]
                check_partition(spans, n_pieces)
                sentences.append((np.ascontiguousarray(tensor), spans))

    num_layers = int(model.config.num_hidden_layers) + 1
    hidden = int(model.config.hidden_size)
    write_swpe(job.output_path, sentences, num_layers, hidden)
    log.info("wrote %d sentences (%d skipped) to %s; fertility=%.4f multi_rate=%.4f",
             stats.num_sentences, stats.num_skipped, job.output_path,
             stats.fertility, stats.multi_rate)
    return stats
