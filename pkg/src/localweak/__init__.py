"""Weak-supervision pipeline for training and evaluating a local-news classifier."""

__version__ = "0.1.0"
