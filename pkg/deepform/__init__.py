"""Deep group formation and group recommendation."""

__version__ = "0.1.0"
