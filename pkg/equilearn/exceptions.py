"""
Error hierarchy shared by the services and the CLI commands.

Every error carries the exit code the command layer reports for it.
"""


class EquilearnError(Exception):
    exit_code: int = 1


class DistributionError(EquilearnError, ValueError):
    """Invalid probability vector, domain mismatch, or zero-mass conditioning."""


class GameValidationError(EquilearnError, ValueError):
    """A Bayesian game violates its shape, prior or payoff-range invariants."""


class ZeroProbabilityTypeError(EquilearnError, ValueError):
    """An operation conditioned on a type whose prior marginal is zero."""

    def __init__(self, player: int, type_index: int):
        self.player = player
        self.type_index = type_index
        super().__init__(f"Type {type_index} of player {player} has zero prior probability")


class RewardRangeError(EquilearnError, ValueError):
    """A reward vector fed to a learner falls outside [0, B]."""


class ScaleCapExceededError(EquilearnError, RuntimeError):
    exit_code = 3


class PosteriorCollapseError(EquilearnError, RuntimeError):
    """An observed outcome has zero likelihood under every expert."""

    def __init__(self, message: str = "outcome impossible under every expert"):
        super().__init__(message)


class BoundViolationError(EquilearnError, RuntimeError):
    """A theoretical bound asserted by --assert-bounds failed on a run."""
    exit_code = 2
