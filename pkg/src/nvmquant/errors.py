"""Exception taxonomy shared by all nvmquant modules."""


class NvmQuantError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NvmQuantError):
    """Invalid parameter, flag, or configuration file content."""


class ValidationError(NvmQuantError):
    """Data violates a structural invariant (shape, range, finiteness)."""


class FormatError(NvmQuantError):
    """Container file is malformed: bad magic, bad version, truncation."""


class IoError(NvmQuantError):
    """Underlying I/O operation failed."""


class InfeasibleError(NvmQuantError):
    """No candidate satisfies the latency/power constraints."""
