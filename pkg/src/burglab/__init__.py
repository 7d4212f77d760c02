"""burglab: a small laboratory for the randomly forced 1d Burgers equation.

Solvers (spectral viscous, Godunov inviscid), ensemble statistics for
increments and spectra, and verdict-style checks of the classical
burgulence scaling laws.
"""

__version__ = "0.1.0"
