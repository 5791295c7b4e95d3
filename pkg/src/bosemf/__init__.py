"""Mean-field dynamics of 1D bosons: NLS solver, Fock-space propagation and counting diagnostics."""

__version__ = "0.1.0"
