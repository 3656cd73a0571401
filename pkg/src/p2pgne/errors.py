"""Exception types raised across the package."""


class P2PGNEError(Exception):
    """Base class for all package errors."""


# -- graph construction -------------------------------------------------------

class DisconnectedGraphError(P2PGNEError):
    """The trading graph is not connected."""


class RowSumMismatchError(P2PGNEError):
    """Weight rows do not share a common sum."""


class NonPositiveSelfWeightError(P2PGNEError):
    """A self weight is zero or negative."""


class SpectrumFailureError(P2PGNEError):
    """The symmetric eigensolver failed."""


class EmptyHorizonError(P2PGNEError):
    """A step-size sequence over the horizon is empty."""


class StepOutOfRangeError(P2PGNEError):
    """A step size falls outside the open interval (0, 1)."""


# -- model / constraints ------------------------------------------------------

class DimensionMismatchError(P2PGNEError):
    """Vector or matrix dimensions are inconsistent."""


class TimeOutOfRangeError(P2PGNEError):
    """A time index falls outside the scenario horizon."""


class InvalidProsumerError(P2PGNEError):
    """A prosumer index is not part of the network."""


class EmptyFeasibleSetError(P2PGNEError):
    """The local feasible set is empty (storage state left its band)."""


class UnboundedSetError(P2PGNEError):
    """A feasible set is unbounded, so suprema over it do not exist."""


# -- solver engine ------------------------------------------------------------

class MissingNeighborMessageError(P2PGNEError):
    """A round update is missing the snapshot of a graph neighbor."""


class InfeasibleSoCError(P2PGNEError):
    """The storage state of charge produced an empty feasible set mid-run."""


# -- oracle -------------------------------------------------------------------

class InfeasibleError(P2PGNEError):
    """The coupled problem appears infeasible (primal residual stalls)."""


class IterationCapError(P2PGNEError):
    """An iterative solve hit its iteration cap before reaching tolerance."""


class TooLargeError(P2PGNEError):
    """The instance is too large for exhaustive active-set enumeration."""


# -- metrics ------------------------------------------------------------------

class LengthMismatchError(P2PGNEError):
    """Two aligned series have different lengths."""


class InsufficientDataError(P2PGNEError):
    """Not enough points for the requested fit."""


# -- scenario IO --------------------------------------------------------------

class ScenarioParseError(P2PGNEError):
    """The scenario file could not be parsed."""


class SchemaVersionError(P2PGNEError):
    """The scenario schema version is not supported."""


class ScenarioValidationError(P2PGNEError):
    """The scenario violates one or more invariants.

    Carries the full list of violations, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {msg}")


class BadProfileSpecError(P2PGNEError):
    """A synthetic profile specification is malformed."""
