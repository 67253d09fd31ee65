"""Exception hierarchy shared by the pricing engines, the CLI and the HTTP app.

DomainError and its subclasses map to exit code 2, NumericalError and its
subclasses to exit code 3 (see cli.py).
"""
from typing import Optional


class PricingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PricingError):
    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint


class ConfigError(DomainError):
    """Invalid value in an environment variable or config file."""


class MissingColumn(DomainError):
    def __init__(self, column: str):
        super().__init__(column, 'required column missing from sweep CSV')
        self.column = column


class NumericalError(PricingError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, error_estimate: float, message: Optional[str] = None):
        super().__init__(message or f"quadrature did not converge (error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


class NonFiniteEvaluation(NumericalError):
    def __init__(self, x: float):
        super().__init__(f"integrand returned a non-finite value at x={x!r}")
        self.x = x


class SeriesNonConvergence(NumericalError):
    def __init__(self, tail_bound: float, terms: int):
        super().__init__(f"series not converged after {terms} terms (tail bound {tail_bound:.3e})")
        self.tail_bound = tail_bound
        self.terms = terms


class SingularBoundary(NumericalError):
    pass


class DegeneratePath(NumericalError):
    pass


class BranchError(NumericalError):
    """Log argument of the closed-form action is not positive."""


class NonFinite(NumericalError):
    pass
