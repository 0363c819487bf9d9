"""Measurement, bounds, noise, sampling and reporting services."""
