"""Online min-max optimization against the cumulative saddle point."""

__version__ = "0.1.0"
