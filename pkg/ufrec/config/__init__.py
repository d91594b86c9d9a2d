"""Configuration module for the UFRec training framework."""
