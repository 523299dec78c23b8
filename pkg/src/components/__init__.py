# src/components/__init__.py
"""
Point sets, Hilbert sort, engines, smoothing, PMMH and benchmark reporting.
"""
