"""Exception types shared across the toolkit."""


class InputDomainError(ValueError):
    """An argument violates an operation's domain."""


class InsufficientDataError(InputDomainError):
    """A series is too short for the requested operation."""


class DegenerateScaleError(InputDomainError):
    """A residual scale estimate collapsed (MAD is zero); skip filtering."""


class UndefinedCorrelationError(InputDomainError):
    """A correlation was requested for zero-variance data."""


class ContractError(ValueError):
    """Linked quantities disagree beyond tolerance."""


class ParseError(ValueError):
    """Malformed input file; the message identifies the row or key."""


class SchemaVersionError(ParseError):
    """A serialized artifact carries an unsupported format version."""
