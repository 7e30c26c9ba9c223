"""Synthetic detection-data generator: sampling, physics, rendering, annotation and evaluation."""

__version__ = "0.1.0"
