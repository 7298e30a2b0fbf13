"""Verification and validation toolkit for evasive minimum risk maneuvers."""

__version__ = "0.1.0"
