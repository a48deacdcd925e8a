"""Rate-distortion-perception region computation and finite-blocklength code simulation."""

__version__ = "0.1.0"
