"""Exception types shared across the package."""


class DomainError(ValueError):
    """A precondition on problem-domain inputs was violated."""


class InstabilityError(RuntimeError):
    """Time integration produced non-finite values.

    Carries the step index at which the blow-up was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FileFormatError(ValueError):
    """A binary artifact failed magic/version/length/checksum validation."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss).  Carries the iteration index."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class RolloutError(RuntimeError):
    """A coupled rollout blew up mid-trajectory.  Carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """A run configuration failed schema validation."""
