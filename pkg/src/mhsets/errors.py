"""Exception hierarchy shared by every module."""


class MHError(Exception):
    """Base class for all errors raised by mhsets."""


class InvalidInput(MHError, ValueError):
    pass


class OutOfDomain(MHError, ValueError):
    pass


class InvalidMetric(MHError, ValueError):
    pass


class EmptySet(MHError, ValueError):
    pass


class SearchExhausted(MHError):
    """No admissible perturbation was found within the search budget."""


class DegenerateGradient(MHError, ValueError):
    pass


class NoContact(MHError):
    """The closed set does not touch the region boundary."""


class CurvatureBlowup(MHError):
    def __init__(self, distance, message=None):
        self.distance = float(distance)
        super().__init__(message or f"curvature blows up at distance {self.distance:.6g}")


class ContainmentFailure(MHError):
    pass


class InvalidStep(MHError, ValueError):
    pass


class FlowExtinct(MHError):
    """The evolving region has vanished (no zero level set left)."""


class InvalidSetup(MHError, ValueError):
    pass


class NestingFault(MHError):
    pass


class ResolutionLimit(MHError, ValueError):
    pass


class ScenarioError(MHError):
    """Schema or fixture-resolution problem in a scenario file."""
