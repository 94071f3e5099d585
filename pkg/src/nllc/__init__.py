"""Non-local lattice liquid-crystal energies: minimisation and elastic limits."""

__version__ = "0.1.0"
