"""meshgate: data-contract control plane for hub-and-spoke data platforms."""

__version__ = "0.1.0"
