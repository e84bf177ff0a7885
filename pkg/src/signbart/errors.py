"""Exception hierarchy shared by every module.

Each class carries a short machine-parsable ``code`` used by the CLI as the
prefix of its one-line error report.
"""


class SignBartError(Exception):
    code = "error"


class DimensionError(SignBartError, ValueError):
    code = "dimension"


class ParameterError(SignBartError, ValueError):
    code = "parameter"


class ContractError(SignBartError, ValueError):
    code = "contract"


class NumericError(SignBartError, ArithmeticError):
    code = "numeric"


class SchemaError(SignBartError, ValueError):
    code = "schema"


class StateError(SignBartError, ValueError):
    code = "state"


class FormatError(SignBartError, ValueError):
    code = "format"
