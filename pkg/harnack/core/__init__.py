"""Discrete models, solvers and checks for Li-Yau bounds under integral Ricci curvature."""
__version__ = "0.3.0"
