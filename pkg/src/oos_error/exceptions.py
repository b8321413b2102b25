"""Exception hierarchy.

Every error raised for bad inputs or violated domain invariants derives
from :class:`OosError` (itself a ``ValueError``), so callers such as the
CLI can map them to a single exit code.
"""


class OosError(ValueError):
    """Base class for domain errors."""


class EmptyInput(OosError):
    pass


class SingleSource(OosError):
    def __init__(self, msg="at least two sources required"):
        super().__init__(msg)


class NonFiniteValue(OosError):
    pass


class EmptySample(OosError):
    pass


class InvalidParameters(OosError):
    """Distribution or closed-form parameters out of their domain."""


class IncompleteComponents(OosError):
    pass


class InvalidCovariance(OosError):
    pass


class InvalidMoments(OosError):
    pass


class TooFewObservations(OosError):
    pass


class TooFewBootstrap(OosError):
    pass


class TooFewPerSource(OosError):
    pass


class NonIntegralAllocation(OosError):
    pass


class TooFewReplicates(OosError):
    pass
