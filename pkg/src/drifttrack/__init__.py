"""Tracking drifting minimizers with adaptively sized projected SGD epochs."""

__version__ = "0.1.0"
