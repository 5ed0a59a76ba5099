"""Cuff-electrode ENG toolkit: synthesis, CAP signature preprocessing and
low-complexity CNN classification."""

__version__ = "0.1.0"
