"""Objective, optimizer, training loop, checkpoints and experiment drivers."""
