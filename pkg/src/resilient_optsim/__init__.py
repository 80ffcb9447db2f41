"""Resilient event-triggered distributed optimization for heterogeneous linear agents."""

__version__ = "0.1.0"
