"""Exception hierarchy shared by all modules."""


class WavedetError(Exception):
    """Base class for package errors."""


class ParameterError(WavedetError, ValueError):
    """An argument violates its documented constraints."""


class DegenerateInputError(WavedetError, ValueError):
    """Input data make the requested quantity undefined."""


class TrainingError(WavedetError):
    """An SVM could not be trained on the given data."""


class ConfigurationError(WavedetError):
    """A pipeline was assembled from inconsistent pieces."""


class CalibrationError(WavedetError):
    """Too few noise scores to hit the requested false-alarm rate."""

    def __init__(self, required: int, available: int, target_pfa: float):
        self.required = required
        self.available = available
        self.target_pfa = target_pfa
        super().__init__(
            f"need at least {required} noise scores for P_fa={target_pfa:g}, got {available}")


class InvariantError(WavedetError):
    """A computed result violates one of its output invariants."""
