"""Driven two-level system in a Lorentzian bath: dynamics and non-Markovianity."""

__version__ = "0.1.0"
