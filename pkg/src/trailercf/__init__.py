"""Temporal convolution hybrid collaborative filtering on movie trailers."""

__version__ = "0.1.0"
