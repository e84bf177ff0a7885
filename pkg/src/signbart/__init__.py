"""SignBart: coordinate-split encoder-decoder for isolated sign recognition."""

__version__ = "0.1.0"
