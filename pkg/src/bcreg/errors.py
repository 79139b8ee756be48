"""Exception and warning types shared across the package."""


class BcrError(Exception):
    """Base class for all library errors."""


class InvalidSpec(BcrError):
    """A spec or configuration object violates its invariants."""


class RankDeficient(BcrError):
    """Row redraws exhausted without recovering numerical rank."""


class DimensionMismatch(BcrError):
    """Array shapes are incompatible with the requested operation."""


class NonPositiveB1(BcrError):
    """Residual scale parameter collapsed to zero (response in column span)."""


class CholeskyFailure(BcrError):
    """Normal-equations matrix is not numerically positive definite."""


class WindowEmpty(BcrError):
    """Subspace-dimension window [m_min, m_max] contains no integers."""


class MemberFitError(BcrError):
    """A single ensemble member failed to fit; carries the member index."""

    def __init__(self, member_index, message):
        super().__init__(f"member {member_index}: {message}")
        self.member_index = member_index


class BracketFailure(BcrError):
    """Quantile bisection bracket does not enclose the target probability."""


class InvalidDataset(BcrError):
    """Dataset violates its invariants (too few rows, non-finite entries)."""


class ParseError(BcrError):
    """CSV input could not be parsed; message carries row/column location."""


class NonNumericCell(ParseError):
    """A predictor or response cell is not a number."""


class MissingResponse(BcrError):
    """The declared response column is absent from the file."""


class UnknownScenario(BcrError):
    """Scenario id is not one of the simulation-study scenarios."""


class ConstantColumnWarning(UserWarning):
    """A predictor column has no variability; its scale is pinned to 1."""


class DegenerateMemberWarning(UserWarning):
    """An ensemble member was dropped because its posterior is degenerate."""
