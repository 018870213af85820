"""Capital-gains tax flows of trading strategies with automatic wash sales."""

__version__ = "0.1.0"
