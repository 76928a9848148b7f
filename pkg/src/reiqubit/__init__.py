"""Optical-frequency qubits in rare-earth doped mixed crystals."""

__version__ = "0.1.0"
