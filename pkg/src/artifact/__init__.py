"""Numerical experiments on Siegel disks of near-parabolic quadratic polynomials.

Modules: cfrac (continued fractions and the perturbation setup), dynamics
(linearizers, explosion coordinates, the maps f_n), geometry (the region
ladder and covering), fatou (lifts, Fatou coordinates, renormalization),
density (masks and area densities) and cli.
"""

__version__ = "0.1.0"
