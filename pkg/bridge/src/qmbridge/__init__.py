"""qmbridge: move framework checkpoints in and out of QMT/QMQ containers."""

__version__ = "0.1.0"

from .container import FloatRecord, QuantRecord, read_qmq, read_qmt, write_qmt
from .convert import TensorEntry, TensorManifest, export_checkpoint, import_quantized
from .errors import (
    BridgeError,
    ConfigError,
    FormatError,
    IoError,
    ManifestMismatch,
    ValidationError,
)
from .evalq import EvalConfig, eval_quality, format_table

__all__ = [
    "__version__",
    "BridgeError",
    "ConfigError",
    "EvalConfig",
    "FloatRecord",
    "FormatError",
    "IoError",
    "ManifestMismatch",
    "QuantRecord",
    "TensorEntry",
    "TensorManifest",
    "ValidationError",
    "eval_quality",
    "export_checkpoint",
    "format_table",
    "import_quantized",
    "read_qmq",
    "read_qmt",
    "write_qmt",
]
