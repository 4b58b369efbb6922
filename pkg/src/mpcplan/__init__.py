"""Two-stage rolling-horizon capacity and mobile-production-container planning."""

__version__ = "0.1.0"
