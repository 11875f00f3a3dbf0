"""Real-time social-distancing analytics over detector outputs."""

__version__ = "0.1.0"
