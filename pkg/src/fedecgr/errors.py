"""Exception types raised across the simulator."""


class FedEcgrError(Exception):
    """Base class for all simulator errors."""


class DimensionError(FedEcgrError, ValueError):
    pass


class PartitionError(FedEcgrError):
    pass


class FormatError(FedEcgrError):
    """Malformed IDX file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GradientSetTooSmall(FedEcgrError):
    pass


class SplitError(FedEcgrError):
    pass


class AggregationError(FedEcgrError):
    pass


class ZeroVectorError(FedEcgrError, ArithmeticError):
    pass


class ConfigError(FedEcgrError, ValueError):
    """Invalid configuration. ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
