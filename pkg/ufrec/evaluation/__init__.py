"""Inference and full-catalog ranking metrics."""
