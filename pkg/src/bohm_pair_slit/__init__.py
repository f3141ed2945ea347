"""
Simulate a two-particle two-slit experiment with standard quantum mechanics detection
statistics and Bohmian trajectory ensembles.
"""

__version__ = "0.3.0"
