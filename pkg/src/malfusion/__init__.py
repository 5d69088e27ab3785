"""Malware family classification from fused static and dynamic features."""

__version__ = "0.1.0"
