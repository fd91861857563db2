"""Convex-order verification for realized, quadratic and predictable quadratic variation."""
from __future__ import annotations

__version__ = "0.1.0"
