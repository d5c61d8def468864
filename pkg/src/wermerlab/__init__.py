"""Numerical laboratory for an unbounded rigid pseudoconvex domain built over a Wermer-type set."""

__version__ = "0.1.0"
