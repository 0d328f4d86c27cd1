"""Exception types shared across the package."""


class PlimitError(Exception):
    """Base class for all package-specific errors."""


class EmptyDomain(PlimitError):
    """Mask contains fewer than two active cells."""


class DisconnectedDomain(PlimitError):
    """Active cells split into more than one graph component."""


class EpsilonTooSmall(PlimitError):
    """Mollification width below the grid spacing resolves no neighbor."""


class TooFewLabels(PlimitError):
    """Label-driven measure construction needs at least two labeled nodes."""


class InsufficientStencil(PlimitError):
    """Node has fewer than two graph neighbors; a two-point scheme cannot run."""


class DegenerateGradient(PlimitError):
    """Pointwise operator undefined at a critical point for exponents below 2."""


class NotBalanced(PlimitError):
    """Measure fails the zero-total-mass compatibility condition."""


class UnbalancedLabels(PlimitError):
    """Two-class label demo requires equally many +1 and -1 labels."""


class ConfigError(PlimitError):
    """Experiment configuration is malformed or references missing files."""


class DomainError(PlimitError, ValueError):
    """Argument lies outside the documented range of a closed-form family."""
