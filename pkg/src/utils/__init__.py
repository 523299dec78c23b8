# src/utils/__init__.py
"""
Utilities: settings helpers, logging, errors, random streams, storage and formatting.
"""
