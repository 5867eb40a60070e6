"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all tokadapt errors."""


class ShapeError(EngineError):
    """Operands have incompatible or malformed shapes."""


class DegenerateVectorError(EngineError):
    """A vector required to have nonzero norm was zero."""


class DomainError(EngineError):
    """A scalar argument fell outside its mathematical domain."""


class ArchiveError(EngineError):
    """A tensor archive is malformed, truncated, or inconsistent."""


class ContractError(EngineError):
    """A condensation hook returned a token matrix violating its contract."""


class InputError(EngineError):
    """User-supplied data (pixels, archives, flags) failed validation."""
