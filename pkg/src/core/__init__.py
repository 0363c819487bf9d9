"""Core utilities and infrastructure."""
