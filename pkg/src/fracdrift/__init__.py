"""Numerical laboratory for fractional diffusion with a repulsive Hardy-type drift.

Modules: ``specfun`` (Gamma and Riesz weights), ``model`` (drift, exponent
equation, weights), ``fracops`` (nonlocal operators), ``evolve`` (periodic
PDE solver), ``radial`` (exact radial reduction in three dimensions), ``mc``
(stable SDE Monte Carlo), ``checks`` (quantitative audits) and ``cli``.
"""

__version__ = "0.1.0"
