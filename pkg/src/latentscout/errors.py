"""Exception types shared across the toolkit."""


class LatentScoutError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(LatentScoutError):
    """Invalid configuration values (bad palette, zoom level, ratios, ...)."""


class ContractError(LatentScoutError):
    """A call violated an operation's precondition (shape, range, bounds)."""


class IngestionError(LatentScoutError):
    """Dataset could not be read from disk."""


class IdxParseError(LatentScoutError):
    """IDX file malformed. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingError(LatentScoutError):
    """Optimization diverged or could not proceed."""


class StateError(LatentScoutError):
    """Operation attempted in the wrong pipeline state."""


class NotFoundError(LatentScoutError):
    """Unknown run id or resource."""
