"""Exception types shared across the planner."""

from __future__ import annotations


class MigplanError(Exception):
    """Base class for all planner errors."""


class ValidationError(MigplanError):
    """Malformed or inconsistent input data (profiles, scenarios, maps)."""


class ProfileParseError(ValidationError):
    """A profile source could not be parsed; carries the offending row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ParameterError(MigplanError):
    """Invalid parameter for the synthetic profile generator."""


class InfeasibleSLOError(MigplanError):
    """No profiled operating point satisfies a service's latency bound."""

    def __init__(self, service_id: str, bound_ms: float):
        super().__init__(
            f"service {service_id!r}: no profile point has latency below "
            f"{bound_ms:g} ms"
        )
        self.service_id = service_id
        self.bound_ms = bound_ms


class ResidualUncoverableError(MigplanError):
    """No triplet can cover the residual request rate (should not occur)."""


class InvalidSizeError(MigplanError):
    """Instance size outside the supported set {1, 2, 3, 4, 7}."""


class PlacementNotFoundError(MigplanError):
    """Attempt to remove a placement that is not on the GPU."""


class SmallSegmentsUnavailableError(MigplanError):
    """A service has no size-1 or size-2 triplet to split into."""

    def __init__(self, service_id: str):
        super().__init__(
            f"service {service_id!r} has no size-1 or size-2 triplet"
        )
        self.service_id = service_id


class UndefinedMetricError(MigplanError):
    """Metric requested over an empty report or map."""


class OracleBoundsError(MigplanError):
    """Exhaustive oracle invoked outside its enforced instance bounds."""


class SimulationConfigError(MigplanError):
    """Deployment map and profile tables disagree before simulation starts."""
