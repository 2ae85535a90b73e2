"""Shared error hierarchy.

Three families matter to callers: model/input errors (bad files, unparseable
expressions), precondition violations (inputs that are well-formed but violate
a documented hypothesis), and numerical failures (rank decisions or iterations
that did not converge). The CLI maps these onto distinct exit codes.
"""


class DiracstretchError(Exception):
    """Base class for all library errors."""


class PreconditionError(DiracstretchError):
    """A documented hypothesis of an operation is violated by the input."""


class NumericalError(DiracstretchError):
    """A numerical procedure failed (singular system, no convergence)."""


class ModelError(DiracstretchError):
    """A model file or expression could not be interpreted."""
