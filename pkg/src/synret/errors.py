"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class SynretError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(SynretError):
    """Bad command-line usage or invalid configuration. CLI exit code 1."""


class DataError(SynretError):
    """Malformed or inconsistent input data (files, schemas, shapes). CLI exit code 2."""


class NumericalError(SynretError):
    """Non-finite values encountered where finite math is required. CLI exit code 3."""
