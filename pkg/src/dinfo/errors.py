"""Exception types raised across the package.

Each error maps to one failure contract; the CLI translates them into
exit codes (2 = I/O, 3 = validation, 4 = numerical failure).
"""


class DinfoError(Exception):
    """Base class for all package errors."""


class ParseError(DinfoError):
    """Malformed input file (ragged rows, non-numeric cells, bad header)."""


class EmptyInput(DinfoError):
    """Input contains no usable data."""


class BadInput(DinfoError):
    """Non-finite or otherwise unusable numeric input."""


class BadBand(DinfoError):
    """Invalid filter band specification."""


class TooShort(DinfoError):
    """Sequence shorter than the operation requires."""


class DegenerateInput(DinfoError):
    """Input lacks the variation the operation needs (e.g. too few distinct values)."""


class DegenerateColumn(DinfoError):
    """A non-intercept regressor column has zero variance."""


class BadLambda(DinfoError):
    """Shrinkage weight outside [0, 1]."""


class ShapeError(DinfoError):
    """Mismatched dimensions or labels."""


class TooFewTrials(DinfoError):
    """Not enough data or replicates for resampling."""


class BadWindow(DinfoError):
    """Local-analysis window incompatible with the sequences."""


class NumericalError(DinfoError):
    """A numerical procedure failed (singular system, degenerate resamples)."""


class BadSigma(DinfoError):
    """Non-positive scale passed where a positive one is required."""


class BadPValue(DinfoError):
    """p-value outside [0, 1]."""


class BadK(DinfoError):
    """Cluster count incompatible with the data."""


class BadDims(DinfoError):
    """Embedding dimension incompatible with the data."""


class EmptyCorpus(DinfoError):
    """Classification corpus has no items."""


class BadLabels(DinfoError):
    """Label vector unusable (e.g. a single class where two are needed)."""


class BadSpec(DinfoError):
    """Invalid synthetic-generator specification."""


class NoOracle(DinfoError):
    """No closed-form value exists for the requested generator."""


class TooLarge(DinfoError):
    """State space too large to enumerate."""
