"""Projective simulation agents with meta-learned damping and glow."""

__version__ = "0.1.0"
