"""Numerical toolkit for spectral trapping conditions in bent and twisted
electromagnetic waveguides: cross-section Neumann eigenpairs, the geometric
vectors driving mode trapping, spectral-gap and localization bounds, and
shape derivatives of the cross-section functional."""

__version__ = "0.1.0"
