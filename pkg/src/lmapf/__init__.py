"""Lifelong multi-agent path finding engine."""

from .grid import Action, GridMap, Location, apply_action, neighbors, parse_map

__all__ = ["Action", "GridMap", "Location", "apply_action", "neighbors", "parse_map"]
__version__ = "0.1.0"
