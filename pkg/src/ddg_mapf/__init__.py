"""Desk-scale MAPF imitation learning with Delta Data Generation (DDG)."""

__version__ = "0.1.0"
