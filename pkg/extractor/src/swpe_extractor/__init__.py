"""Dump per-layer encoder hidden states and word alignments into .swpe stores."""

from .extract import ExtractionJob, ExtractionStats, extract
from .swpe import write_swpe

__all__ = ["ExtractionJob", "ExtractionStats", "extract", "write_swpe"]
