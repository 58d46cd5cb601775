"""Simulation and regularity diagnostics for the 1D surface growth model

    v_t + v_xxxx = -(v_x^2)_xx.
"""
__version__ = "0.1.0"
