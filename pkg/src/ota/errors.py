"""Exception hierarchy.

Every error raised by the library derives from :class:`OTAError`, which is a
``ValueError`` so callers that only care about "bad input" can catch that.
Validation errors carry the offending ``index`` when one exists.
"""


class OTAError(ValueError):
    """Base class for all library errors."""


class ValidationError(OTAError):
    """A domain invariant was violated."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class NonDecreasingGammas(ValidationError):
    pass


class PositionMultiplierOutOfRange(ValidationError):
    pass


class BudgetNotPositive(ValidationError):
    pass


class CtrOutOfRange(ValidationError):
    pass


class FewerItemsThanSlots(ValidationError):
    pass


class DuplicateItemId(ValidationError):
    pass


class EmptyQuery(ValidationError):
    pass


class InconsistentBudget(ValidationError):
    pass


class UnknownItemIndex(ValidationError):
    pass


class InvalidAssignment(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


class LengthMismatch(OTAError):
    pass


class DegenerateZeroMean(OTAError):
    pass


class EmptyHorizon(OTAError):
    pass


class GammaOutOfRange(OTAError):
    """Total impression mass outside ``[0, N]``."""


class InvalidParams(OTAError):
    pass


class DegenerateAllZeroAlpha(OTAError):
    pass


class NonPositiveEta(OTAError):
    pass


class InvalidSpec(OTAError):
    pass


class InvalidConfig(OTAError):
    pass
