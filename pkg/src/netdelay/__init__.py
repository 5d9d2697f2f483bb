"""Single-packet delay on a periodic lattice network with partial routing tables."""

__version__ = "0.1.0"
