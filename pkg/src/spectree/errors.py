"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 3, EngineError -> 4.
"""


class SpectreeError(Exception):
    pass


class DataError(SpectreeError):
    """Invalid or inconsistent input data (bad file, mismatched shapes)."""


class EngineError(SpectreeError):
    """Runtime failure inside a simulation or pipeline stage."""
