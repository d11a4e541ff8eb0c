"""Control stack and deterministic 2D simulator for a standing-support mobility robot."""

__version__ = "0.1.0"
