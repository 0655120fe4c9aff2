"""Spectral laboratory for a third-order-in-time nonlinear acoustic model.

Modules: core (parameters, fields, forcing), modal (per-mode linear theory),
lp (dyadic partition and Besov norms), sim (pseudo-spectral solver), decay
(whole-space decay experiments), acceptance (criteria), cli (front end).
"""

__version__ = "0.1.0"
