"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter is out of range or not finite."""


class DegenerateInputError(ValueError):
    """Too few points, or all points collinear."""


class EmptyDomainError(ValueError):
    """An operation needs at least one point."""


class InvalidVertexError(ValueError):
    """A vertex index does not belong to the graph."""


class OutOfWindowError(ValueError):
    """A requested region escapes the safe part of the sampling window."""


class PreconditionViolated(RuntimeError):
    """A deterministic check was called on a scene that does not satisfy its hypothesis."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    Attributes
    ----------
    keys : list of str
        Offending configuration keys.
    """

    def __init__(self, message, keys=()):
        self.keys = list(keys)
        if self.keys:
            message = f"{message}: {', '.join(self.keys)}"
        super().__init__(message)
