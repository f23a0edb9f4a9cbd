"""Consensus-based optimization with noisy oracles."""
