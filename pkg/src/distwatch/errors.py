"""Shared error types."""


class DistwatchError(Exception):
    """Base class for engine errors."""


class FormatError(DistwatchError):
    """Input file or tensor layout does not match its declared format."""


class ConfigError(DistwatchError):
    """Invalid configuration (thresholds, paths, missing required inputs)."""


class NoDetectionsRecordedError(DistwatchError):
    """A detection file has no record for the requested frame index.

    Distinct from an empty detection list, which is a valid record.
    """
