"""Cooperation dynamics on adaptive networks with recommender-driven rewiring."""

__version__ = "0.1.0"
