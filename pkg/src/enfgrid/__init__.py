"""Grid-of-origin classification of audio and power recordings from their
electric network frequency (ENF) traces."""

__version__ = "0.1.0"

from .labels import GridLabel, NominalFreq, RecType, SubDatasetKey  # noqa: E402

__all__ = ["GridLabel", "NominalFreq", "RecType", "SubDatasetKey", "__version__"]
