"""Emotion-conditioned discrete-unit speech resynthesis."""

__version__ = "0.1.0"
