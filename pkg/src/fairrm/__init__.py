"""Fair admission control for network revenue management."""

__version__ = "0.1.0"
