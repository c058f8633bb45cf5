"""STCast: desk-scale global/regional weather forecasting toolkit."""

__version__ = "0.1.0"
