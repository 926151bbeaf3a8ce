"""Laboratory for shadowing experiments on skew products over the 2-shift."""

__version__ = "0.1.0"
