"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class MogBNError(Exception):
    exit_code = 1


class InputError(MogBNError):
    """Malformed or invalid input (network file, evidence, expression)."""

    exit_code = 2


class ExpressionError(InputError):
    pass


class FitError(MogBNError):
    exit_code = 3


class CompileError(MogBNError):
    exit_code = 4


class UnsupportedError(CompileError):
    """Operation outside the supported class (e.g. 2-D integration)."""


class EvidenceError(MogBNError):
    exit_code = 5


class ResourceError(MogBNError):
    exit_code = 6


class ValidationFailure(MogBNError):
    exit_code = 7
