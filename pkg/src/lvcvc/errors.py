"""Exception hierarchy. The CLI maps these onto exit codes."""

from .container import ContainerError


class DataError(Exception):
    """Bad or missing input data (audio, manifests, features)."""


class AudioFormatError(DataError):
    pass


class ManifestError(DataError):
    pass


class CheckpointError(ContainerError):
    """Unreadable, corrupt or incompatible checkpoint."""


__all__ = ["AudioFormatError", "CheckpointError", "ContainerError", "DataError", "ManifestError"]
