"""Contextuality-Nonlocality Simulator - exact, sampled and hidden-variable analysis of the hybrid Peres-Mermin Bell test."""

__version__ = "1.0.0"
__author__ = "Contextuality Simulator Team"
