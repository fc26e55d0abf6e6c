"""qmix: quantum ergodicity and mixing on Schreier graphs, numerically."""
__version__ = "0.1.0"
