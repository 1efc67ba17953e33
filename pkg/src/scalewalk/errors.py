class GeometryError(ValueError):
    """Degenerate or malformed polygon/curve input."""


class ConfigurationError(ValueError):
    """Cell configuration violates a structural invariant."""


class WindowTooSmall(RuntimeError):
    """A dyadic query needs cells outside the materialized window."""


class SolverError(RuntimeError):
    """Linear solve failed or the Dirichlet problem is ill-posed."""


class FormatError(ValueError):
    """File could not be parsed or has an unsupported version."""
