"""Wireless sensor network topology simulator with fault-diagnosis classifiers."""

__version__ = "0.1.0"
