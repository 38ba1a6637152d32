"""Numerical laboratory for open chaotic maps.

Classical side: symbolic cylinder tables, topological pressure, Bowen
dimension and decay rates for open baker maps and dispersing disk
billiards.  Quantum side: open quantized baker maps, spectral counting,
coherent-state propagation and anti-Wick damping on the torus.
"""

from . import (
    baker_classical,
    cli_io,
    disk_billiard,
    phase_space,
    quantum_baker,
    spectral_counting,
    symbolic_pressure,
)
from .errors import LabError

__all__ = [
    "LabError",
    "baker_classical",
    "cli_io",
    "disk_billiard",
    "phase_space",
    "quantum_baker",
    "spectral_counting",
    "symbolic_pressure",
]

__version__ = "0.1.0"
