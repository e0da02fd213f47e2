"""Zero-shot voice conversion with a location-variable-convolution waveform generator."""

from .config import DiscriminatorConfig, GeneratorConfig, TrainConfig
from .corpus import AudioClip, load_manifest, read_wav, write_wav
from .errors import AudioFormatError, CheckpointError, ContainerError, DataError, ManifestError

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AudioFormatError",
    "CheckpointError",
    "ContainerError",
    "DataError",
    "DiscriminatorConfig",
    "GeneratorConfig",
    "ManifestError",
    "TrainConfig",
    "load_manifest",
    "read_wav",
    "write_wav",
]
