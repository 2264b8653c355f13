"""Simulation and learning of disordered spin dynamics from time-ordered and
out-of-time-order correlators.

Modules
-------
operators   Pauli strings, dense operators and Haar sampling.
system      Geometries, disorder and Hamiltonians (with optional cavity).
evolve      Krylov and kernel propagators, Floquet schedules, reversal.
correlate   Correlator families, trace estimation and read-out noise.
fisher      Fisher information of couplings and its extrapolation.
learn       Kernel machines, feature selection and the learning tasks.
disjoint    The disjoint-unitary problem and its one-query distinguisher.
pheno       Closed-form phenomenology and scaling fits.
cli         Experiment runner.
"""
__version__ = "0.1.0"
