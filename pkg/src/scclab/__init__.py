"""Desk-scale laboratory for contracting elements, growth series and growth tightness."""

__version__ = "0.1.0"
