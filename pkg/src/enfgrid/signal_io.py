"""Recording I/O, resampling, segmentation and the corpus manifest."""

import json
import logging
import struct
from dataclasses import dataclass, field, replace
from math import gcd
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .labels import GridLabel, NominalFreq, RecType, nominal_for, parse_label

logger = logging.getLogger(__name__)

CANONICAL_RATE = 1000
# Highest analysed harmonic is 3 x 120 Hz.
MAX_ANALYSED_HZ = 360
SEGMENT_SECONDS = 300
MANIFEST_NAME = "manifest.tsv"


def _resolve_nominal(label, nominal):
    if nominal is not None:
        nominal = NominalFreq(int(nominal))
    if label is not None and label is not GridLabel.N:
        derived = nominal_for(label)
        if nominal is not None and nominal is not derived:
            raise ValueError(f"grid {label} is {int(derived)} Hz, got nominal {int(nominal)}")
        nominal = derived
    return nominal


@dataclass
class Recording:
    samples: np.ndarray
    sample_rate: int
    label: Optional[GridLabel] = None
    rec_type: Optional[RecType] = None
    nominal: Optional[NominalFreq] = None
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("recording samples must be a non-empty 1-D sequence")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)
        self.label = parse_label(self.label)
        if self.rec_type is not None and not isinstance(self.rec_type, RecType):
            self.rec_type = RecType.parse(self.rec_type)
        self.nominal = _resolve_nominal(self.label, self.nominal)

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class SegmentSample:
    samples: np.ndarray
    sample_rate: int
    parent: str
    index: int
    label: Optional[GridLabel] = None
    rec_type: Optional[RecType] = None
    nominal: Optional[NominalFreq] = None
    meta: dict = field(default_factory=dict)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples, **meta):
        return replace(self, samples=samples, meta={**self.meta, **meta})


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: Optional[GridLabel]
    rec_type: Optional[RecType]


def read_manifest(path):
    """Read a ``path<TAB>label<TAB>rec_type`` manifest.

    Relative paths are resolved against the manifest's directory. ``?`` marks
    an unknown label or recording type.
    """
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        rel, label, rec_type = parts
        rec_type = None if rec_type.strip() in ("", "?") else RecType.parse(rec_type)
        file_path = Path(rel)
        if not file_path.is_absolute():
            file_path = path.parent / file_path
        entries.append(ManifestEntry(file_path, parse_label(label), rec_type))
    return entries


def write_manifest(path, rows):
    """Write manifest rows of ``(path, label, rec_type)``; ``None`` becomes ``?``."""
    lines = []
    for file_path, label, rec_type in rows:
        lines.append("\t".join([str(file_path),
                                "?" if label is None else str(label),
                                "?" if rec_type is None else str(rec_type)]))
    Path(path).write_text("\n".join(lines) + "\n")


def _lookup_manifest(path, manifest):
    path = Path(path).resolve()
    if manifest is None:
        candidate = path.parent / MANIFEST_NAME
        if not candidate.exists():
            return None
        manifest = candidate
    for entry in read_manifest(manifest):
        if entry.path.resolve() == path:
            return entry
    return None


def _to_unit_range(data):
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if np.issubdtype(data.dtype, np.integer):
        return data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    data = data.astype(np.float64)
    peak = np.max(np.abs(data)) if data.size else 0.0
    return data / peak if peak > 1.0 else data


def resample(samples, rate, target=CANONICAL_RATE):
    """Polyphase resampling between integer rates."""
    if rate == target:
        return np.asarray(samples, dtype=np.float64)
    g = gcd(int(rate), int(target))
    return resample_poly(samples, target // g, rate // g)


def load_recording(path, expected_rate=None, manifest=None, target_rate=CANONICAL_RATE):
    """Load a mono linear-PCM WAV file as a :class:`Recording` at the canonical rate.

    Parameters
    ----------
    path : path-like
        WAV file.
    expected_rate : int, optional
        If given, the file's native rate must equal it.
    manifest : path-like, optional
        Corpus manifest carrying label / recording type. Defaults to a
        ``manifest.tsv`` next to the file when one exists.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError, EOFError) as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if data.ndim > 1:
        if data.shape[1] != 1:
            raise ValueError(f"{path}: multichannel unsupported ({data.shape[1]} channels)")
        data = data[:, 0]
    if data.size == 0:
        raise ValueError(f"{path}: empty recording")
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if rate < 2 * MAX_ANALYSED_HZ:
        raise ValueError(f"{path}: sample rate {rate} Hz is below Nyquist for the "
                         f"{MAX_ANALYSED_HZ} Hz analysis band")
    samples = np.clip(resample(_to_unit_range(data), rate, target_rate), -1.0, 1.0)

    entry = _lookup_manifest(path, manifest)
    label = entry.label if entry else None
    rec_type = entry.rec_type if entry else None
    return Recording(samples, target_rate, label=label, rec_type=rec_type, source_id=path.stem)


def write_wav(path, rec):
    """Write a recording as 16-bit PCM at its own sample rate."""
    pcm = np.round(np.clip(rec.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(Path(path), rec.sample_rate, pcm)


def segment(rec, seconds=SEGMENT_SECONDS):
    """Split into contiguous, non-overlapping segments; a short tail is dropped."""
    size = int(round(seconds * rec.sample_rate))
    count = rec.samples.size // size
    if count == 0:
        raise ValueError(f"{rec.source_id or 'recording'}: too short to segment "
                         f"({rec.duration:.1f} s < {seconds} s)")
    tail = rec.samples.size - count * size
    if tail:
        logger.debug("%s: dropping %.1f s tail", rec.source_id, tail / rec.sample_rate)
    return [SegmentSample(rec.samples[i * size:(i + 1) * size].copy(), rec.sample_rate,
                          parent=rec.source_id, index=i, label=rec.label,
                          rec_type=rec.rec_type, nominal=rec.nominal)
            for i in range(count)]


# ENFSEG01: 32-byte little-endian header, float32 samples, JSON metadata.
SEGMENT_MAGIC = b"ENFSEG01"
_SEG_HEADER = struct.Struct("<8sIQQI")


def write_segment(path, seg):
    samples = np.asarray(seg.samples, dtype="<f4")
    meta = json.dumps({
        "parent": seg.parent,
        "index": int(seg.index),
        "label": None if seg.label is None else str(seg.label),
        "rec_type": None if seg.rec_type is None else str(seg.rec_type),
        "nominal": None if seg.nominal is None else int(seg.nominal),
        "meta": seg.meta,
    }, sort_keys=True).encode()
    offset = _SEG_HEADER.size + samples.nbytes
    with open(path, "wb") as fh:
        fh.write(_SEG_HEADER.pack(SEGMENT_MAGIC, seg.sample_rate, samples.size, offset, len(meta)))
        fh.write(samples.tobytes())
        fh.write(meta)


def read_segment(path):
    raw = Path(path).read_bytes()
    if len(raw) < _SEG_HEADER.size:
        raise OSError(f"{path}: truncated segment file")
    magic, rate, length, offset, meta_len = _SEG_HEADER.unpack_from(raw)
    if magic != SEGMENT_MAGIC:
        raise OSError(f"{path}: bad magic {magic!r}")
    samples = np.frombuffer(raw, dtype="<f4", count=length, offset=_SEG_HEADER.size).astype(np.float64)
    meta = json.loads(raw[offset:offset + meta_len])
    return SegmentSample(samples, rate, parent=meta["parent"], index=meta["index"],
                         label=parse_label(meta["label"]),
                         rec_type=None if meta["rec_type"] is None else RecType.parse(meta["rec_type"]),
                         nominal=None if meta["nominal"] is None else NominalFreq(meta["nominal"]),
                         meta=meta.get("meta", {}))
