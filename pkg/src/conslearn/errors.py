"""Exception hierarchy shared across the package."""


class ConsensusLearningError(Exception):
    pass


class DimensionError(ConsensusLearningError, ValueError):
    """Parameter vectors or matrices whose shapes do not line up."""


class ConfigError(ConsensusLearningError, ValueError):
    """A configuration value is out of its valid range."""


class UsageError(ConsensusLearningError, ValueError):
    """An operation was called with arguments it cannot serve."""


class IdxFormatError(ConsensusLearningError, ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass
