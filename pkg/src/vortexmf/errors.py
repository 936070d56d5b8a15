"""Exception types shared by the solver modules and mapped to CLI exit codes."""

from __future__ import annotations


class VortexError(Exception):
    """Base class for library errors."""

    exit_code = 3


class ConfigurationError(VortexError, ValueError):
    """Invalid user input or parameter combination."""

    exit_code = 1


class DomainError(VortexError, ValueError):
    """Parameters outside the range where the mathematical object exists."""

    exit_code = 1


class ConvergenceError(VortexError, RuntimeError):
    """An iterative procedure did not converge or a root was not bracketed."""

    exit_code = 2


class InternalError(VortexError, RuntimeError):
    """Unexpected numerical failure (e.g. a singular linear system)."""

    exit_code = 3
