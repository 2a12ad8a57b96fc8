"""Exception types shared across the package."""


class DPWardenError(Exception):
    """Base class for all package-specific errors."""


class VariantMismatch(DPWardenError):
    """Two budgets of different variants were compared or combined."""


class DeltaOverflow(DPWardenError):
    """Composed delta reached or exceeded 1."""


class UnsupportedVariant(DPWardenError):
    """Operation not defined for this budget variant."""


class NoConversionPath(DPWardenError):
    """No group-size factor declared between two privacy units."""


class ParseError(DPWardenError):
    """Malformed policy or request document."""


class ValidationError(DPWardenError):
    """Well-formed document with inconsistent content."""


class BudgetFnDomain(DPWardenError):
    """Budget-function input outside the table range with clamping disabled."""


class IncomparableKeys(DPWardenError):
    """Rule order keys of mixed kinds cannot be compared without annotation."""


class MissingCost(DPWardenError):
    """A mechanism lacks a privacy cost for a unit tracked by a rule."""


class UnknownTimeStep(DPWardenError):
    """Request time step lies beyond the tracked horizon."""


class ConfigError(DPWardenError):
    """Invalid workload or simulator configuration."""
