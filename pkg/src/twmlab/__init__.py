"""Photon-number statistics of three-wave mixing: exact quantum, classical and
classical-trajectory Monte Carlo solvers."""

__version__ = "0.1.0"
