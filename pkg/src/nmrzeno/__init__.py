"""Density-matrix and isochromat simulations of Zeno-type suppression in NMR spin systems."""

__version__ = "0.1.0"
