"""Auxiliary data preparation scripts."""
