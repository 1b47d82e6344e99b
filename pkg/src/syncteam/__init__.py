"""Multi-agent movement synchronization from discrete event streams."""

__version__ = "0.1.0"
