"""Attribute discovery and multi-domain image translation at desk scale."""

__version__ = "0.1.0"
