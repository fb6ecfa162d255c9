"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (CLI exit code 2);
exceeding an enumeration cap raises :class:`TooLargeToEnumerate` (exit code 3).
"""


class GapBenchError(Exception):
    pass


class ValidationError(GapBenchError, ValueError):
    pass


class DuplicateEdge(ValidationError):
    pass


class SelfLoop(ValidationError):
    pass


class WeightOutOfRange(ValidationError):
    pass


class BadVertexId(ValidationError):
    pass


class LTWeightExceeded(ValidationError):
    """An LT vertex has total incoming weight above 1."""


class WrongModelKind(ValidationError):
    pass


class InconsistentPartial(ValidationError):
    """No full realization is consistent with the partial realization."""


class DegenerateLevel(ValidationError):
    pass


class BadParams(ValidationError):
    pass


class InequalityCheckFailed(ValidationError):
    """A worst-case instance does not follow its intended greedy trajectory."""


class NotEnoughCandidates(ValidationError):
    pass


class AllKnownInfected(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class TooLargeToEnumerate(GapBenchError):
    pass
