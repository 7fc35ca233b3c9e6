"""Exception and warning types raised across the package."""


class MarsslError(Exception):
    """Base class for package errors."""


class EmptyData(MarsslError, ValueError):
    """Too few rows to fit anything."""


class DimMismatch(MarsslError, ValueError):
    """Feature dimension disagrees with a fitted object."""


class LengthMismatch(MarsslError, ValueError):
    """Paired sequences (predictions, labels, masks) have different lengths."""


class InsufficientData(MarsslError, ValueError):
    """A dataset is too small for the requested split."""


class DegenerateDataWarning(UserWarning):
    """All rows identical; a single floor-covariance component was returned."""


class RankTooLowWarning(UserWarning):
    """Requested PCA dimension exceeded the data rank and was clamped."""


class EmptyClassWarning(UserWarning):
    """A declared label has no rows; a fallback density is used for it."""
