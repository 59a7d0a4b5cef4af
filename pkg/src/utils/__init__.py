"""Utility modules."""

from utils.rng import substream

__all__ = ["substream"]
