"""Piezoelectric energy harvester simulator: Standard diode bridge vs SECE."""

__version__ = "0.1.0"
