"""Exception types shared across the package."""


class DapsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DapsError):
    """Operands have incompatible shapes."""


class NonFiniteMatrix(DapsError):
    """A matrix contains NaN or Inf entries."""


class OrthogonalityError(DapsError):
    """A matrix claimed to have orthonormal columns does not."""


class RankDeficient(DapsError):
    """A matrix lost column rank where full rank is required."""


class SingularGram(DapsError):
    """The Gram matrix X'X is numerically singular."""


class InvalidSpec(DapsError):
    """Synthetic-problem parameters violate their constraints."""


class InvalidPartition(DapsError):
    """A column partition violates its size constraints."""


class InvalidConfig(DapsError):
    """Algorithm configuration violates its constraints."""


class ParseError(DapsError):
    """A matrix file is malformed or truncated."""


class DimensionHeaderMismatch(DapsError):
    """A matrix file body disagrees with its declared dimensions."""


class ShapeMismatch(DapsError):
    """Nodes contributed differently shaped payloads to a collective."""


class DeltaOutOfRange(DapsError):
    """An inexactness constant delta_i violates its theory bound."""


class RunAborted(DapsError):
    """A node failed during a distributed run."""
