"""Multi-target text matching for news comment quality."""

__version__ = "0.1.0"
