"""Bosonic Josephson junction toolkit: chip potentials, GPE two-mode
parameters, finite-temperature two-mode dynamics, classical-field
thermodynamics and number-squeezing statistics."""

__version__ = "0.1.0"
