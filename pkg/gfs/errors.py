"""Exceptions raised by the GFS sampling library."""


class GfsError(Exception):
    """Base class for every library error."""


class GraphError(GfsError):
    """Invalid graph input."""


class GenerationFailed(GraphError):
    """A random generator could not produce a connected graph."""


class ParseError(GraphError):
    """An edge-list line could not be parsed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class ConvergenceFailure(GfsError):
    """The symmetric eigensolver did not converge."""


class OracleCapExceeded(GfsError):
    """Exact eigendecomposition requested above the configured node cap."""


class InvalidShift(GfsError):
    """Resolved shift mu is outside (0, 1)."""


class SingularSubmatrix(GfsError):
    pass


class NonPositiveSchur(GfsError):
    """Schur complement of a block-inverse extension is numerically zero."""


class DegenerateUpdate(GfsError):
    """A Sherman-Morrison denominator vanished."""


class InfeasibleAvailability(GfsError):
    """Fewer available nodes than the sample budget."""


class RankDeficient(GfsError):
    """The sampled rows of the bandlimited basis do not have full column rank."""


class LengthMismatch(GfsError):
    pass


class ConfigError(GfsError):
    """Invalid experiment configuration."""
