"""
Errors raised by the toolkit. Each class carries the exit code the CLI returns for it.
"""


class MpsGnnError(Exception):
    """Base class for every error the toolkit reports to the user."""

    exit_code = 1


class UsageError(MpsGnnError):
    """Invalid ids, bad arguments, shape mismatches, infeasible configurations."""

    exit_code = 1


class DataError(MpsGnnError):
    """Input data that cannot be turned into a valid graph or learning problem."""

    exit_code = 2


class DegenerateLabelsError(DataError):
    """Only one class is present where both are required."""


class DeadEndRelationError(DataError):
    """Propagating the bags along a relation left every bag empty."""


class NumericalError(MpsGnnError):
    """A loss or activation became non-finite."""

    exit_code = 3
