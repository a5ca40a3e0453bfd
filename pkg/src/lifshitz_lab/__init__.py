"""Numerical laboratory for the integrated density of states of
matrix-valued Anderson models and their Lifshitz tails."""

__version__ = "0.1.0"
