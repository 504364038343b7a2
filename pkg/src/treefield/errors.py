"""Exception types shared by all modules."""


class TreefieldError(Exception):
    """Base class for all package errors."""


class NegativeRate(TreefieldError):
    """A rate parameter was negative."""


class EmptyFamily(TreefieldError):
    """A map family ended up with no effective entries."""


class ArityOverflow(TreefieldError):
    """An exact enumeration would exceed the configured cap."""


class StepTooLarge(TreefieldError):
    """An ODE step left the admissible region by more than the tolerance."""


class NotConverged(TreefieldError):
    """An iterative solver did not reach its tolerance."""


class BudgetExceeded(TreefieldError):
    """A sampled tree grew past the node budget (lower the horizon)."""


class EnumerationCap(TreefieldError):
    """A combinatorial enumeration exceeded its cap."""


class Unsupported(TreefieldError):
    """The operation is not defined for this state space."""
