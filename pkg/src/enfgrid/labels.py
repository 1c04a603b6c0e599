"""Grid labels, recording types, nominal frequencies and sub-dataset routing.

This module is the single source of truth for the label -> nominal frequency
mapping. Everything else imports it from here.
"""

from dataclasses import dataclass
from enum import Enum, IntEnum


class GridLabel(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"
    H = "H"
    I = "I"  # noqa: E741
    # Only ever produced by the fusion decision stage.
    N = "N"

    def __str__(self):
        return self.value


class RecType(str, Enum):
    AUDIO = "Audio"
    POWER = "Power"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, text):
        for member in cls:
            if member.value.lower() == str(text).strip().lower():
                return member
        raise ValueError(f"unknown recording type {text!r}")


class NominalFreq(IntEnum):
    HZ50 = 50
    HZ60 = 60

    def __str__(self):
        return str(int(self))


KNOWN_GRIDS = tuple(g for g in GridLabel if g is not GridLabel.N)

_NOMINAL = {
    GridLabel.A: NominalFreq.HZ60,
    GridLabel.C: NominalFreq.HZ60,
    GridLabel.I: NominalFreq.HZ60,
    GridLabel.B: NominalFreq.HZ50,
    GridLabel.D: NominalFreq.HZ50,
    GridLabel.E: NominalFreq.HZ50,
    GridLabel.F: NominalFreq.HZ50,
    GridLabel.G: NominalFreq.HZ50,
    GridLabel.H: NominalFreq.HZ50,
}


def parse_label(text):
    """Parse a label string; ``'?'`` and empty strings map to ``None``."""
    if text is None:
        return None
    if isinstance(text, GridLabel):
        return text
    text = str(text).strip()
    if text in ("", "?"):
        return None
    try:
        return GridLabel(text.upper())
    except ValueError:
        raise ValueError(f"unknown grid label {text!r}") from None


def nominal_for(label):
    """Nominal mains frequency of a known grid."""
    label = parse_label(label)
    if label is None or label is GridLabel.N:
        raise ValueError(f"grid {label} has no nominal frequency")
    return _NOMINAL[label]


def grids_for(nominal):
    """Known grids sharing a nominal frequency, in alphabetical order."""
    nominal = NominalFreq(int(nominal))
    return tuple(g for g in KNOWN_GRIDS if _NOMINAL[g] is nominal)


@dataclass(frozen=True, order=True)
class SubDatasetKey:
    rec_type: RecType
    nominal: NominalFreq

    @property
    def name(self):
        return f"{self.rec_type.value.lower()}{int(self.nominal)}"

    @property
    def classes(self):
        return grids_for(self.nominal)

    @property
    def n_classes(self):
        return len(self.classes)

    @classmethod
    def from_name(cls, name):
        for key in ALL_KEYS:
            if key.name == name:
                return key
        raise ValueError(f"unknown sub-dataset {name!r}")

    def __str__(self):
        return self.name


def route(rec_type, nominal):
    """Map a resolved (recording type, nominal frequency) pair to its sub-dataset."""
    return SubDatasetKey(RecType.parse(rec_type) if not isinstance(rec_type, RecType) else rec_type,
                         NominalFreq(int(nominal)))


ALL_KEYS = tuple(SubDatasetKey(r, n) for r in RecType for n in NominalFreq)
