"""Compositional guaranteed-cost LQ synthesis for layered networks."""

__version__ = "0.1.0"
