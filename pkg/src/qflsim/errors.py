"""Exception types shared across the package."""


class QflsimError(Exception):
    """Base class for all package errors."""


class ConfigError(QflsimError):
    """Invalid configuration: bad indices, mismatched dimensions, bad fields."""


class IngestError(QflsimError):
    """Dataset ingestion failure: bad magic, truncation, count mismatch."""


class ProtocolError(QflsimError):
    """Federated protocol misuse, e.g. aggregating an empty client list."""


class MetricError(QflsimError):
    """Robustness-metric precondition violated, e.g. grid not spanning the range."""


class UsageError(QflsimError):
    """API misuse, e.g. parameter-shift on a non-rotation parameter."""
