"""Benchmark toolkit for user rating prediction."""

__version__ = "0.1.0"
