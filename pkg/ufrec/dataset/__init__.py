"""Corpus ingestion, splitting, prefix expansion and batching."""
