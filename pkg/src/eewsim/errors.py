"""Exception hierarchy shared by all modules."""


class EEWError(Exception):
    """Base class for every error raised by this package."""


class InputError(EEWError, ValueError):
    """A caller passed a value outside the function's domain."""


class ConfigurationError(EEWError, ValueError):
    """A model or scenario parameter violates its invariant."""


class ContractError(EEWError, ValueError):
    """An input sequence violates an ordering or size precondition."""


class ParseError(EEWError, ValueError):
    """A data file could not be parsed.

    ``line`` and ``column`` are 1-based when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class InsufficientDataError(EEWError, ValueError):
    """A record has too few samples for the requested metric."""


class EstimationError(EEWError, ValueError):
    """A parameter could not be estimated from the available members."""
