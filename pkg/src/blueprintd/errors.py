"""Exception types shared across the package."""


class BlueprintdError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(BlueprintdError):
    """A scenario, pricing, or SLO configuration is malformed."""


class ParseError(BlueprintdError):
    """Unsupported or malformed SQL. Carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownTable(BlueprintdError):
    pass


class UnknownPrice(BlueprintdError):
    pass


class EmptyEligibleSet(BlueprintdError):
    """No engine can run the query (placement and/or capability restriction)."""


class NoCalibration(BlueprintdError):
    pass


class DegenerateDesign(BlueprintdError):
    """The observation set does not identify the model constants."""


class NonPositiveInput(BlueprintdError):
    pass


class UtilizationOutOfRange(BlueprintdError):
    """Utilization too close to the M/M/1 pole; treat the engine as overloaded."""


class Saturated(BlueprintdError):
    """Transaction utilization at or beyond the model pole M."""


class EmptyWorkload(BlueprintdError):
    pass


class EmptySamples(BlueprintdError):
    pass


class NoFeasibleBlueprint(BlueprintdError):
    """Every candidate violates the SLOs; the constraints must change."""


class SearchSpaceTooLarge(BlueprintdError):
    pass


class TransitionInFlight(BlueprintdError):
    pass
