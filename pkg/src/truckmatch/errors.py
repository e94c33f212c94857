"""Shared exception and warning types."""


class TruckmatchError(Exception):
    """Base class for package errors."""


class SameCellLane(TruckmatchError):
    """Pickup and dropoff fall in the same coarse hexcell; the shipment is
    too short for lane-based matching."""


class SchemaError(TruckmatchError):
    """A record is missing a required field or has an unparseable value."""


class FormatError(TruckmatchError):
    """A persisted artifact (lane store, model, dataset) is malformed."""


class EmptyPingset(TruckmatchError):
    """An operation that needs at least one ping received none."""


class DegenerateData(TruckmatchError):
    """Training data contains a single class."""


class LengthMismatch(TruckmatchError):
    """Paired sequences have different lengths."""


class NoEligibleCandidates(TruckmatchError):
    """No candidate has enough pings to score yet; callers should wait."""


class ConfigError(TruckmatchError):
    """Inconsistent or out-of-range configuration."""


class InsufficientDecoysWarning(UserWarning):
    """Fewer than the recommended number of distinct alternative
    destinations are represented among negative samples."""
