"""Equilibrium portfolio strategies under smooth ambiguity with drift learning."""

from __future__ import annotations

__version__ = "0.1.0"
