"""
Exception hierarchy for numisnet

Every error raised on purpose by the pipeline derives from NumisError and
carries the process exit code the CLI should return for it.
"""

from typing import Optional


class NumisError(Exception):
    """Base class for pipeline errors"""

    exit_code = 1


class ConfigError(NumisError):
    """Invalid configuration, flag or lexicon reference"""

    exit_code = 2


class TopologyError(ConfigError):
    """Network layer sequence that cannot produce a valid shape chain"""

    def __init__(self, message: str, layer: Optional[str] = None):
        if layer:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class DataError(NumisError):
    """Problems with samples, manifests or files on disk"""

    exit_code = 3


class ManifestError(DataError):
    """Malformed manifest or history TSV"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PreprocessingError(DataError):
    """Image that cannot be turned into a network input"""

    def __init__(self, message: str, path: Optional[str] = None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class CheckpointError(DataError):
    """Unreadable, truncated or mismatched checkpoint file"""


class NumericError(NumisError):
    """Non-finite values during training"""

    exit_code = 4

    def __init__(self, message: str, epoch: Optional[int] = None,
                 batch: Optional[int] = None, layer: Optional[str] = None):
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        if layer is not None:
            where.append(f"layer {layer}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.layer = layer


class ContractViolation(NumisError, ValueError):
    """Shape or argument contract broken by a caller of a numeric op"""
