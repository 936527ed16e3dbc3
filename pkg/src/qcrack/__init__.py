"""Quantum-assisted crack detection and segmentation on a statevector simulator."""

__version__ = "0.1.0"
