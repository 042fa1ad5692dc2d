"""Virtual dual-fluoroscope engine."""

__version__ = "0.1.0"
