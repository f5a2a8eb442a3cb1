"""Exception hierarchy.

Every error carries a machine-readable ``category``; the CLI maps categories
to exit codes (parse 2, validation 3, precondition 4, internal 5).
"""


class MediationError(Exception):
    category = "internal"


class ParseError(MediationError):
    category = "parse"


class ValidationError(MediationError):
    """Input data breaks a structural invariant."""

    category = "validation"

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class SchemaError(ValidationError):
    pass


class PreconditionError(MediationError):
    """An estimator's identifying assumption is not met by the data."""

    category = "precondition"


class PositivityError(PreconditionError):
    pass


class DataCompletenessError(PreconditionError):
    pass


class InternalConsistencyError(MediationError):
    category = "internal"


EXIT_CODES = {
    "parse": 2,
    "validation": 3,
    "precondition": 4,
    "internal": 5,
}
