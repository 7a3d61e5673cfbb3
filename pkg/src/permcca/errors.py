"""Exception types shared across the package."""


class PermCcaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(PermCcaError):
    """Inputs that must agree in shape do not."""


class InvalidDims(PermCcaError):
    """Problem dimensions outside the supported regime (e.g. N < P + Q)."""


class RankDeficient(PermCcaError):
    """A matrix required to have full column rank does not."""


class NoConvergence(PermCcaError):
    """An iterative factorization failed to converge."""


class NotSymmetric(PermCcaError):
    """A matrix required to be symmetric is not (within tolerance)."""


class SingularMatrix(PermCcaError):
    """A matrix required to be invertible / strictly positive definite is not."""


class NoValidSelection(PermCcaError):
    """No full-rank set of rows to drop exists for the Theil reduction."""


class InvalidBlocks(PermCcaError):
    """Exchangeability block labels are inconsistent with the data."""


class InvalidOptions(PermCcaError):
    """Mutually incompatible inference options."""


class TooLarge(PermCcaError):
    """Exhaustive enumeration was requested but the group is too big."""


class TooManyComponents(PermCcaError):
    """More principal components requested than the matrix supports."""


class UnknownScenario(PermCcaError):
    """Simulation scenario id not in the registry."""


class ParseError(PermCcaError):
    """Malformed input file.

    Carries 1-based ``line`` and ``column`` attributes when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class RaggedRows(ParseError):
    """CSV rows do not all have the same number of fields."""


class TooFewPermutations(UserWarning):
    """The admissible permutation group has fewer distinct elements than requested.

    Sampling with replacement is still valid, so this is a warning, not an error.
    """
