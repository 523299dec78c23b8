# src/__init__.py
"""
SQMC toolkit: particle engines, smoothing, particle MCMC and the bench harness.
"""
