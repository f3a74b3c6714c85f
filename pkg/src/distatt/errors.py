"""Exception hierarchy shared by every distatt module."""


class DistattError(ValueError):
    """Base class for all validation and runtime errors raised by distatt."""


class NotSkew(DistattError):
    pass


class NotUnit(DistattError):
    pass


class ZeroVector(DistattError):
    pass


class Degenerate(DistattError):
    pass


class NotRotation(DistattError):
    pass


class NotConnected(DistattError):
    pass


class HasCycle(DistattError):
    pass


class SelfLoop(DistattError):
    pass


class DuplicateEdge(DistattError):
    pass


class EigenvalueOrderViolation(DistattError):
    pass


class EmptyXiSet(DistattError):
    pass


class NotInJumpSet(DistattError):
    pass


class Collision(DistattError):
    pass


class InsufficientSamples(DistattError):
    pass


class StepRejected(DistattError):
    pass


class MaxJumpsExceeded(DistattError):
    pass


class ScenarioError(DistattError):
    """Raised while loading a scenario; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass
