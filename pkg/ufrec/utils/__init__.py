"""Utilities module for the UFRec framework."""
