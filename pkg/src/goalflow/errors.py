"""Exception hierarchy shared by every stage of the pipeline."""


class GoalFlowError(Exception):
    """Base class; the CLI maps these to exit code 3."""


class ShapeMismatch(GoalFlowError, ValueError):
    pass


class DomainError(GoalFlowError, ValueError):
    pass


class EmptyMask(GoalFlowError):
    pass


class EmptyFrontier(GoalFlowError):
    pass


class EmptySet(GoalFlowError):
    pass


class SourceBlocked(GoalFlowError):
    pass


class Unreachable(GoalFlowError):
    pass


class NoFreeSpace(GoalFlowError):
    pass


class ParseError(GoalFlowError):
    pass


class RangeError(GoalFlowError, ValueError):
    pass


class NetworkError(GoalFlowError):
    pass


class NonFiniteGradient(GoalFlowError, FloatingPointError):
    pass


class NonFiniteState(GoalFlowError, FloatingPointError):
    pass


class UnsolvableEpisode(GoalFlowError):
    pass


class GenerationFailed(GoalFlowError):
    pass


class ConfigError(GoalFlowError):
    """Invalid configuration; the CLI maps this to exit code 2."""
