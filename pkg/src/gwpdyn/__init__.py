"""Gaussian wave-packet dynamics laboratory.

Implements the classical parameter flow for Gaussian packets and its
width-corrected Hamiltonian variant, a ladder-operator wave-packet basis,
the associated residual fields and identities, a Strang-split spectral
reference solver, and a convergence harness that measures how each flow
tracks the exact quantum expectation values as the semiclassical parameter
shrinks.
"""
from .dynamics import IntegratorConfig, Trajectory, backend_name, integrate, step
from .errors import GwpdynError
from .grid import Grid, suggest_grid
from .packet import PacketParams, standard_packet
from .potentials import PotentialModel, free, gaussian_well, harmonic, quartic, torsional
from .wavefunction import WaveFunction, expectation, inner_product, l2_norm

__version__ = "0.1.0"

__all__ = [
    "Grid", "GwpdynError", "IntegratorConfig", "PacketParams", "PotentialModel",
    "Trajectory", "WaveFunction", "backend_name", "expectation", "free",
    "gaussian_well", "harmonic", "inner_product", "integrate", "l2_norm",
    "quartic", "standard_packet", "step", "suggest_grid", "torsional",
]
