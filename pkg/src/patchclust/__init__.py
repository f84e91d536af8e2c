"""Patch-aware cluster-count representations of Dota 2 heroes and lineups."""

__version__ = "0.1.0"
