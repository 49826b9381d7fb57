"""
Errors Module
=============
Exception hierarchy shared by every GraphROM module.

The CLI maps these onto exit codes (see config.EXIT_* and cli.main):
data/config problems exit 2, numerical failures exit 3.
"""

from typing import Optional


class GraphCalcError(Exception):
    """Base class for all GraphROM errors."""


# =========================
# Data / Input Errors
# =========================
class DataError(GraphCalcError):
    """Input data could not be used as given."""


class ParseError(DataError):
    """A field could not be parsed; carries the 1-based file line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """Columns are missing, misnamed, or rows are ragged."""


class OrderingError(DataError):
    """Time column is not strictly increasing."""


class CapacityError(DataError):
    """Requested object exceeds the configured size limit."""


# =========================
# Numerical Errors
# =========================
class NumericalError(GraphCalcError):
    """A numerical routine failed to produce a trustworthy result."""


class ConditioningError(NumericalError):
    """Linear system is rank deficient or its residual exceeds tolerance."""

    def __init__(self, message: str, residual: Optional[float] = None):
        self.residual = residual
        super().__init__(message)


class DegenerateGeometryError(NumericalError):
    """Neighborhood growth ran out of candidates before reaching full rank."""

    def __init__(self, message: str, achieved_rank: int = 0, required_rank: int = 0):
        self.achieved_rank = achieved_rank
        self.required_rank = required_rank
        super().__init__(message)


class SolverError(NumericalError):
    """Nonlinear time-step solve did not converge."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message)


# =========================
# Contract Errors
# =========================
class AlignmentError(GraphCalcError):
    """A neighbor offset is zero along the derivative dimension."""

    def __init__(self, message: str, neighbor: Optional[int] = None):
        self.neighbor = neighbor
        super().__init__(message)


class DomainError(GraphCalcError):
    """Argument outside its mathematical domain (e.g. negative edge weight)."""


class LossSpecError(GraphCalcError):
    """Loss weights are negative or all zero."""


class GroupingError(GraphCalcError):
    """Cross-validation needs at least two groups."""


class ConfigError(GraphCalcError):
    """Invalid run configuration; `field` names the offending key path."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
