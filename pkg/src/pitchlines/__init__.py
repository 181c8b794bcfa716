"""Soccer field line detection, classification, and threshold training."""

__version__ = "0.1.0"
