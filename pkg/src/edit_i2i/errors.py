"""Exception hierarchy.

Every error carries a short ``kind`` tag and a process exit code so the CLI
can report failures as a single machine-parsable line.
"""


class EditError(Exception):
    kind = "error"
    exit_code = 1


class UsageError(EditError):
    kind = "usage"
    exit_code = 2


class ShapeError(EditError, ValueError):
    kind = "shape"
    exit_code = 2


class DomainError(EditError, ValueError):
    kind = "domain"
    exit_code = 2


class ConfigError(EditError, ValueError):
    kind = "config"
    exit_code = 2


class DataError(EditError):
    kind = "data"
    exit_code = 3


class FormatError(EditError):
    kind = "format"
    exit_code = 3


class IntegrityError(EditError):
    kind = "integrity"
    exit_code = 3


class NumericError(EditError, ArithmeticError):
    kind = "numeric"
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
