"""Synthetic data for demos and property tests."""
