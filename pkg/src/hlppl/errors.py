"""Exception hierarchy shared by every stage of the pipeline."""


class HlpplError(Exception):
    """Base class for all package errors."""


class ParseError(HlpplError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(HlpplError, ValueError):
    pass


class DuplicateDateError(ValidationError):
    pass


class ContractError(ValidationError):
    """Inputs violate an operation's precondition."""


class InsufficientDataError(HlpplError, ValueError):
    pass


class DegenerateInputError(HlpplError, ArithmeticError):
    pass


class DegenerateWindowError(DegenerateInputError):
    """Rank-deficient LPPL design matrix."""


class FitFailureError(HlpplError, ArithmeticError):
    pass


class DomainError(HlpplError, ValueError):
    """LPPL evaluated at or beyond the critical time."""


class FeatureUnavailableError(HlpplError, LookupError):
    pass
