"""Exception taxonomy shared across the package.

Domain failures (instability, assumption violations, solver breakdown)
derive from DelayHinfError so callers can distinguish them from plain
usage errors (ValueError/TypeError), which map to a different CLI exit
code.
"""


class DelayHinfError(Exception):
    """Base class for domain-level failures."""


class ParseError(DelayHinfError):
    """Malformed input file; names the offending field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ValidationError(DelayHinfError):
    """Structurally well-formed data violating a model invariant."""


class SingularMatrixError(DelayHinfError):
    """Characteristic matrix singular at the requested point."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class ConvergenceError(DelayHinfError):
    """Iteration hit its cap; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateRootError(DelayHinfError):
    """Root refinement hit a (numerically) defective eigenvalue."""


class NormalizationError(DelayHinfError):
    """The normalization factor xi could not be made real positive."""


class NonsmoothError(DelayHinfError):
    """Derivative undefined at a coalescent/nonsmooth point."""


class InstabilityError(DelayHinfError):
    """A computation requiring exponential stability met an unstable system."""


class AssumptionError(DelayHinfError):
    """Interconnection matrix outside the method's admissible class."""


class UnboundedRadiusError(DelayHinfError):
    """No perturbation level within the search cap destabilizes the system."""

    def __init__(self, message, eps_cap=None):
        super().__init__(message)
        self.eps_cap = eps_cap


class NoStabilizerError(DelayHinfError):
    """Stabilization phase failed to reach the required margin."""

    def __init__(self, message, best_abscissa=None, best_params=None):
        super().__init__(message)
        self.best_abscissa = best_abscissa
        self.best_params = best_params
