"""SDTP: an SDN-based transport protocol with in-path caching and retransmission."""

__version__ = "0.1.0"
