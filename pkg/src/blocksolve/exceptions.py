"""Exception types raised by the linear algebra and solver layers."""


class BlockSolveError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BlockSolveError, ValueError):
    """Operand shapes do not conform."""


class SingularMatrix(BlockSolveError, ArithmeticError):
    """A symmetric indefinite factorization met a zero pivot."""


class NotPositiveDefinite(BlockSolveError, ArithmeticError):
    """A Cholesky factorization met a nonpositive pivot."""


class Breakdown(BlockSolveError, ArithmeticError):
    """Arnoldi produced a zero vector before the residual target was met."""


class NonlinearOperator(BlockSolveError, ValueError):
    """A superposition probe showed the operator is not linear."""


class DimensionCap(BlockSolveError, ValueError):
    """A dense verification path was asked to exceed its size cap."""


class InvalidSpec(BlockSolveError, ValueError):
    """Problem generator parameters are inconsistent."""


class InvalidNetwork(BlockSolveError, ValueError):
    """A power network violates a structural requirement."""


class ImbalancedDispatch(InvalidNetwork):
    """Total generation does not match total load."""


class DisconnectedNetwork(InvalidNetwork):
    """The network graph has more than one connected component."""


class ParseError(BlockSolveError, ValueError):
    """A network or problem file could not be parsed."""
