"""Exception hierarchy for the toolkit.

Every error raised by this package derives from :class:`ToolkitError` so
callers can catch one base class at an API boundary (the CLI maps them to
exit code 2).
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class FileFormatError(ToolkitError):
    """An input document could not be parsed or failed schema validation."""


class DimensionMismatchError(ToolkitError):
    """Matrix or vector dimensions are inconsistent."""


class DomainError(ToolkitError):
    """A scalar parameter lies outside its admissible range."""


# --- topology ---------------------------------------------------------------

class TopologyError(ToolkitError):
    """Base class for topology validation errors."""


class RowSumError(TopologyError):
    """A row of the weight matrix deviates from unit sum beyond tolerance."""


class NegativeWeightError(TopologyError):
    """The weight matrix contains a negative entry."""


class ZeroDiagonalError(TopologyError):
    """A diagonal weight is not strictly positive."""


class SelfLoopError(TopologyError):
    """An edge list contains a self-loop."""


class IndexOutOfRangeError(TopologyError):
    """An edge references an agent index outside 1..n."""


class SpectrumError(TopologyError):
    """Graph reachability and the eigenvalue test disagree (bad numerics)."""


class NoSpanningTreeError(ToolkitError):
    """The operation requires a topology with a directed spanning tree."""


# --- gain design ------------------------------------------------------------

class GainDesignError(ToolkitError):
    """Base class for gain synthesis errors."""


class NotStabilizableError(GainDesignError):
    """(A, B) fails the stabilizability eigenvector test."""


class NotDetectableError(GainDesignError):
    """(A, C) fails the detectability eigenvector test."""


class UserGainUnstableError(GainDesignError):
    """A user-supplied K leaves A + BK outside the Schur-stable set."""


class NotNeutrallyStableError(GainDesignError):
    """The state matrix is not neutrally stable, as the method requires."""


class SingularProjectionError(GainDesignError):
    """The output projection C U V^T is numerically singular."""


class IllConditionedBasisError(GainDesignError):
    """The invariant-subspace basis [U W] is too ill-conditioned to invert."""


class DeltaOutOfRangeError(GainDesignError):
    """delta violates its admissible range (including the rank-one bound)."""


class DivergedError(GainDesignError):
    """The Riccati iteration grew without bound; no solution at this delta."""


class MaxIterationsError(GainDesignError):
    """The Riccati iteration failed to meet tolerance within max_iter."""


# --- simulation -------------------------------------------------------------

class InfeasibleFormationError(ToolkitError):
    """Formation offsets violate the drift-invariance feasibility condition."""
