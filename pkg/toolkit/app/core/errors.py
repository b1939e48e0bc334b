"""
Exception hierarchy shared by the solver services and the command line.
Every error carries a human-readable message plus a ``details`` dict with
the diagnostics (residual histories, sector indices, widths) that the CLI
writes into its records.
"""


class VortexStripError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 3

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class DomainValidationError(VortexStripError):
    """Raised when grid or physical parameters violate their invariants."""

    exit_code = 2


class ConfigError(VortexStripError):
    """Raised when a configuration file or override is malformed."""

    exit_code = 2


class ConvergenceError(VortexStripError):
    """Raised when Newton, the fixed point or an eigensolver fails to converge."""

    pass


class SingularSystemError(VortexStripError):
    """Raised when a sector solve hits a singular operator."""

    pass


class BranchLostError(VortexStripError):
    """Raised when continuation cannot produce a further branch point."""

    pass


class InsufficientDataError(VortexStripError):
    """Raised when a fit is requested on too few branch points."""

    exit_code = 1
