"""Slot-synchronous simulator of multi-channel radio broadcast under jamming."""

__version__ = "0.1.0"
