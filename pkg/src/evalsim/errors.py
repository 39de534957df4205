"""Exception hierarchy shared by all evalsim modules."""


class EvalsimError(Exception):
    """Base class for every error raised by evalsim."""


class DomainError(EvalsimError, ValueError):
    """An argument lies outside the domain of a function."""


class ProfileValidationError(EvalsimError, ValueError):
    """Raised by :func:`evalsim.core.validate_profile`.

    ``violations`` holds every problem found, not only the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            shown += f"; ... ({more} more)"
        super().__init__(shown)


class ModelError(EvalsimError, ValueError):
    """Invalid model or configuration. ``path`` names the offending JSON field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DimensionMismatch(ModelError):
    pass


class NotPositiveDefinite(EvalsimError, ValueError):
    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"correlation matrix is not positive definite "
            f"(smallest eigenvalue {self.min_eigenvalue:.3g})"
        )


class SingularMatrix(EvalsimError, ValueError):
    pass


class DegenerateSample(EvalsimError, ValueError):
    """The sample cannot support the requested estimator."""


class ZeroExpected(EvalsimError, ValueError):
    pass


class AllValuesEqual(EvalsimError, ValueError):
    pass


class NonConvergence(EvalsimError, RuntimeError):
    """An iterative method hit its cap. ``best`` carries the best iterate found."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class DegenerateInit(EvalsimError, RuntimeError):
    pass


class SingularCovariance(EvalsimError, RuntimeError):
    pass


class TiesPresent(EvalsimError, ValueError):
    def __init__(self, voters):
        self.voters = list(voters)
        super().__init__(
            f"{len(self.voters)} voter(s) have tied evaluations "
            f"(first: voter {self.voters[0] + 1})"
        )


class TooManyCandidates(EvalsimError, ValueError):
    pass
