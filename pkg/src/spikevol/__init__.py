"""Numerical laboratory for a rough-volatility-with-spikes model family.

Modules
-------
grids      uniform grids and singular-aware grid functions
specfun    Mittag-Leffler functions and the model's kernel family
volterra   product-integration convolutions and resolvent solvers
rng        counter-based random streams (worker-count independent)
hawkes     prelimit marked-event intensity simulation
sve        Euler schemes for the limiting stochastic Volterra equation
riccati    nonlinear Volterra-Riccati solver and Laplace functionals
harness    reproducible cross-validation campaigns with hashed artifacts
plotting   figure rendering for CLI reports
config     flat key=value configuration and canonical hashing
cli        command-line entry point
"""

__version__ = "0.1.0"
