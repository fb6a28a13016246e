"""Exception hierarchy shared by all modules."""


class QuanvError(Exception):
    """Base class for every error raised by quanvnet."""


class ConfigurationError(QuanvError, ValueError):
    """A configuration value is outside its supported range."""


class ContractError(QuanvError, ValueError):
    """Inputs violate a shape or dimension contract."""


class DecodeError(QuanvError, ValueError):
    """A quantum state does not have the expected encoded form."""


class IdxParseError(QuanvError, ValueError):
    """Malformed IDX container."""


class IdxMagicError(IdxParseError):
    pass


class IdxTruncatedError(IdxParseError):
    pass


class IdxCountMismatchError(IdxParseError):
    pass


class CacheFormatError(QuanvError, ValueError):
    """Malformed or mismatched QENC / model file."""
