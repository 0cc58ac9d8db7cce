"""Simulation and analysis of single W-centre emitters in silicon."""

__version__ = "0.1.0"
