"""Planck-cell resolved out-of-time-order correlators.

Modules
-------
numerics     dense hermitian/unitary linear algebra
planck       Planck-cell bases and macroscopic operators
models       kicked rotor, LMG, inverted oscillator, Gibbs states
classical    standard map, mean-field flows, coarse-grained cell map
otoc         Heisenberg tracks, cell and thermal OTOCs, spreading function
observables  cell-population entropy, Ehrenfest deviation
analysis     exponent fits, saturation statistics, island/sea masks
pipelines    config-driven experiments (used by the ``planckotoc`` command)
"""

__version__ = "0.1.0"
