"""Entanglement classification with quantum-inspired kernels and SVMs."""
