"""Spatial-mode transmission through turbulence: bases, optics, channel statistics.

Subpackages follow the simulation pipeline: `hilbert` builds the discrete
measurement bases (OAM logical, MUB families, angular, SIC-POVM), `optics`
samples the corresponding transverse fields and propagates them, `turbulence`
generates Zernike phase screens with Kolmogorov statistics plus an adaptive
optics correction model, `analysis` turns projection probabilities into
crosstalk matrices and dit error rates, and `harness` runs seeded Monte Carlo
experiments end to end.
"""

__version__ = "0.1.0"
