"""Exception types shared across the package."""


class NatgenError(Exception):
    """Base class for all package errors."""


class EvaluationError(NatgenError, ValueError):
    """A fitness function returned a non-finite value."""

    def __init__(self, genome, value):
        self.genome = genome
        self.value = value
        super().__init__(f"non-finite fitness {value!r} for genome {list(genome)!r}")


class StateError(NatgenError, RuntimeError):
    """An operation was called on data in the wrong state (e.g. unevaluated)."""


class NumericError(NatgenError, ArithmeticError):
    """A numerical routine failed (singular matrix, non-finite gradient, ...)."""


class TrainingError(NatgenError, RuntimeError):
    def __init__(self, epoch, message="non-finite loss"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")
