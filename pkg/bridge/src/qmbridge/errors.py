"""Error taxonomy for the bridge tool."""


class BridgeError(Exception):
    """Base class for all qmbridge errors."""


class ConfigError(BridgeError):
    """Bad option value or unusable configuration."""


class ValidationError(BridgeError):
    """Data violates an invariant (non-finite values, shape mismatch, ...)."""


class FormatError(BridgeError):
    """A QMT/QMQ byte stream is malformed."""


class IoError(BridgeError):
    """Filesystem-level read/write failure."""


class ManifestMismatch(BridgeError):
    """Manifest and container/checkpoint disagree about tensor names or shapes."""
