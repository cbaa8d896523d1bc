"""Exception types shared across the package."""


class UnichainError(Exception):
    """Base class for all errors raised by this package."""


class NotSquare(UnichainError):
    """Transition matrix input is not a square 2-D matrix."""


class NegativeEntry(UnichainError):
    """Transition matrix contains a negative probability."""

    def __init__(self, i, j, value):
        self.i = i
        self.j = j
        self.value = value
        super().__init__(f"negative entry {value!r} at ({i}, {j})")


class RowSumViolation(UnichainError):
    """A transition-matrix row does not sum to 1 within tolerance."""

    def __init__(self, index, row_sum):
        self.index = index
        self.row_sum = row_sum
        super().__init__(f"row {index} sums to {row_sum!r}, expected 1")


class InfeasibleRequest(UnichainError):
    """A generator could not satisfy the requested constraints."""


class NotUnichain(UnichainError):
    """Operation requires a chain with exactly one recurrent class."""


class SingularSystem(UnichainError):
    """A linear system that should be regular turned out singular."""


class DimensionMismatch(UnichainError):
    """Vector/matrix dimensions do not agree."""


class TooLarge(UnichainError):
    """Exact subset enumeration was requested beyond its size cutoff."""


class ConstancyViolation(UnichainError):
    """Per-state Kemeny values deviate beyond the numerical-failure threshold."""


class RewardOutOfRange(UnichainError):
    """Rewards fall outside the range a check requires."""


class ParseError(UnichainError):
    """A chain/reward file could not be parsed."""


class PropertyViolation(UnichainError):
    """A randomized self-check or runtime bound check failed."""
