"""Proximity-risk detection from BLE advertising RSS, with a simulated exposure-notification protocol."""

__version__ = "0.1.0"
