"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A linear-algebra or likelihood evaluation failed irrecoverably."""


class SingularSystemError(NumericalError):
    """A penalized normal system stayed singular after jitter escalation."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class ScaleModelError(NumericalError):
    """Fisher scoring for the scale coefficients did not converge."""

    def __init__(self, message, last_alpha=None, score_norm=None):
        super().__init__(message)
        self.last_alpha = last_alpha
        self.score_norm = score_norm
