"""Penalized phi-FEM for the Poisson-Dirichlet problem on level-set geometries."""

__version__ = "0.1.0"
