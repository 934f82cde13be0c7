"""Kernel-limit simulation of neural-network quantum states."""

__version__ = "0.1.0"
