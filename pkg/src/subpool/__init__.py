"""Subword pooling probing toolkit: datasets, pooling operators, tiny probes,
and the statistical analysis layer, with the published result tables as
verifiable fixtures."""

__version__ = "0.1.0"
