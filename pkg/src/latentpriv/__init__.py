"""Divergence-constrained privatization of latent representations."""

__version__ = "0.1.0"
