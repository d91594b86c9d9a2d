"""Backbone encoder and the two training-only auxiliary heads."""
