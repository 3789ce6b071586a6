"""Inclusive vote aggregation: tree overlay, 2nd-chance fallback, multiplicity-encoded rewards."""

__version__ = "0.1.0"
