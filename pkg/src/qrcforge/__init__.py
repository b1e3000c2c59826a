"""Simulation and configuration of quantum reservoir computers for multi-task
time-series learning."""

__version__ = "0.1.0"
