"""
Adaptive mean-residue loss laboratory.
"""
__version__ = '1.0.0'

# Bumped whenever a CSV, manifest or checkpoint layout changes.
FORMAT_VERSION = 1
