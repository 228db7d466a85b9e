"""Steady-state Fock-state preparation of softened nonlinear nanobeams
coupled to laser-driven cavity modes: device model, Lindblad dynamics,
Wigner functions, and probe spectra."""

__version__ = "0.1.0"
