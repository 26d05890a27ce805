"""Low-rank decomposed feature adaptation for zero-shot interaction classification."""

__version__ = "0.1.0"
