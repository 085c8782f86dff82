"""Robust multivariate chain-ladder reserving with depth-, projection- and MCD-based outlier handling."""

__version__ = "0.1.0"
