"""Shared exception types."""


class ConfigError(Exception):
    """Invalid configuration or distribution parameters."""


class FleetLoadError(Exception):
    """Fleet file failed to parse or violates profile invariants."""


class AggregationError(Exception):
    """Model aggregation received incompatible inputs."""


class ProtocolError(Exception):
    """Malformed or out-of-order wire message."""


class TraceError(Exception):
    """Trace is incomplete or inconsistent for the requested analysis."""
