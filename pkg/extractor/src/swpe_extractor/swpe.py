"""Own writer for the .swpe interchange format.

Layout (little-endian): magic "SWPE", u32 version=1, u32 num_layers,
u32 hidden, u32 num_sentences; then per sentence: u32 num_subwords,
u32 num_words, num_words x (u32 start, u32 end), layer-major f32 data.

This is an independent implementation of the documented format; the probing
toolkit on the other side of the interface has its own reader and writer.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SWPE"
VERSION = 1


def check_partition(spans, num_subwords):
    pos = 0
    for start, end in spans:
        if start != pos or end <= start:
            raise ValueError(f"spans do not partition [0, {num_subwords}): {spans}")
        pos = end
    if pos != num_subwords:
        raise ValueError(f"spans cover [0, {pos}) of {num_subwords} subwords")


def write_swpe(path, sentences, num_layers, hidden):
    """sentences: iterable of (tensor [num_layers x n_subwords x hidden], spans)."""
    sentences = list(sentences)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, num_layers, hidden, len(sentences)))
        for tensor, spans in sentences:
            tensor = np.asarray(tensor, dtype="<f4")
            if tensor.shape[0] != num_layers or tensor.shape[2] != hidden:
                raise ValueError(
                    f"tensor shape {tensor.shape} does not match "
                    f"({num_layers}, *, {hidden})"
                )
            check_partition(spans, tensor.shape[1])
            fh.write(struct.pack("<II", tensor.shape[1], len(spans)))
            for start, end in spans:
                fh.write(struct.pack("<II", start, end))
            fh.write(np.ascontiguousarray(tensor).tobytes())
