"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to so the command layer can
translate failures without a lookup table.
"""


class HybridTuneError(Exception):
    exit_code = 1


class ConfigurationError(HybridTuneError, ValueError):
    exit_code = 2


class DimensionError(HybridTuneError, ValueError):
    exit_code = 2


class LabelError(HybridTuneError, ValueError):
    exit_code = 2


class ParameterError(HybridTuneError, ValueError):
    exit_code = 2


class InputError(HybridTuneError, ValueError):
    exit_code = 2


class GraphStateError(HybridTuneError, RuntimeError):
    exit_code = 1


class UnsupportedArchitectureError(HybridTuneError, ValueError):
    exit_code = 2


class DataError(HybridTuneError):
    exit_code = 3


class DatasetFormatError(DataError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class CheckpointFormatError(DataError):
    """Bad magic bytes or unsupported format version."""


class CheckpointCorruptError(DataError):
    """Payload truncated or inconsistent with its own header."""


class ArtifactMismatchError(HybridTuneError):
    exit_code = 4
