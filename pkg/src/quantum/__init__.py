"""Quantum linear algebra primitives."""
