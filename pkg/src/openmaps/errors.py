"""Typed errors shared across the laboratory modules.

Every domain failure raises a subclass of LabError.  The CLI maps any
LabError to exit code 1 and prints the class name verbatim, so the names
here are part of the external interface.  Config-file problems use
ConfigParse, which the CLI maps to exit code 2.
"""


class LabError(Exception):
    """Base class for all domain errors raised by this package."""


# symbolic_pressure

class EmptyTable(LabError):
    """Cylinder table has no admissible words."""


class InsufficientDepths(LabError):
    """Too few table depths for extrapolation or a slope fit."""


class NoSignChange(LabError):
    """Root bracket endpoints do not straddle zero."""


class NotOpen(LabError):
    """Pressure of the escape weight is nonnegative: the system does not leak."""


class NoCycle(LabError):
    """Word graph is acyclic, so cycle means are undefined."""


# disk_billiard

class GrazingHit(LabError):
    """Billiard image is within 1e-12 of tangency."""


class NoConvergence(LabError):
    """Iterative solve did not reach tolerance."""


class ShadowedPath(LabError):
    """A free-flight segment of the requested word crosses a third disk."""


class NotHyperbolic(LabError):
    """Closed-orbit monodromy trace has modulus <= 2."""


class TooFewSurvivors(LabError):
    """Monte-Carlo escape fit window is empty."""


# quantum_baker

class BadDimension(LabError):
    """Hilbert space dimension incompatible with the map (a must divide N)."""


class DimensionMismatch(LabError):
    """Operator and state dimensions differ."""


class DimensionCap(LabError):
    """Requested dense dimension exceeds the configured cap."""


# spectral_counting

class DegenerateCounts(LabError):
    """Fewer than 3 nonzero annulus counts: exponent fit impossible."""


# phase_space

class NotSymplectic(LabError):
    """2x2 matrix determinant differs from 1 by more than 1e-12."""


class DegenerateFrame(LabError):
    """Frame with a + ib = 0; handled internally by pre-composing with J."""


# cli_io

class ConfigParse(LabError):
    """Malformed or incomplete run configuration."""


class EmptyData(LabError):
    """Plot or export requested for an empty data set."""
