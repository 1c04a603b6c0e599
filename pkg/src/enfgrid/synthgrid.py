"""Synthetic multi-grid ENF corpora.

Each grid's mains frequency deviation is a constant grid offset plus a
first-order autoregressive process sampled once per second. The waveform is a sum of harmonics of the
integrated instantaneous frequency plus white noise. SNR is defined in-band:
power of the fundamental over noise power inside ``nominal +/- 1 Hz``, which
is what :mod:`enfgrid.detect` estimates.
"""

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .labels import GridLabel, NominalFreq, RecType, nominal_for
from .signal_io import CANONICAL_RATE, Recording, write_manifest, write_wav

AR_STEP_SECONDS = 1.0
SNR_BAND_HZ = 2.0
MAX_DEVIATION_STD = 0.1
MAX_MEAN_OFFSET = 0.2
PEAK_LEVEL = 0.9


@dataclass(frozen=True)
class SynthGridParams:
    label: Optional[GridLabel]
    nominal: NominalFreq
    ar_coeff: float
    deviation_std: float
    mean_offset: float = 0.0
    harmonic_weights: tuple = (1.0, 0.8, 0.4)
    audio_snr_db: float = 10.0
    power_snr_db: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "nominal", NominalFreq(int(self.nominal)))
        object.__setattr__(self, "harmonic_weights", tuple(float(w) for w in self.harmonic_weights))
        if self.label is not None:
            object.__setattr__(self, "label", GridLabel(self.label))
            if nominal_for(self.label) is not self.nominal:
                raise ValueError(f"grid {self.label} must be {int(nominal_for(self.label))} Hz")
        if not 0.0 < self.ar_coeff < 1.0:
            raise ValueError(f"ar_coeff must lie in (0, 1), got {self.ar_coeff}")
        # zero is the degenerate constant-frequency case
        if not 0.0 <= self.deviation_std <= MAX_DEVIATION_STD:
            raise ValueError(f"deviation_std must lie in [0, {MAX_DEVIATION_STD}] Hz, "
                             f"got {self.deviation_std}")
        if abs(self.mean_offset) > MAX_MEAN_OFFSET:
            raise ValueError(f"|mean_offset| must not exceed {MAX_MEAN_OFFSET} Hz")
        if not self.harmonic_weights or self.harmonic_weights[0] <= 0:
            raise ValueError("the fundamental harmonic weight must be positive")
        if self.power_snr_db <= self.audio_snr_db:
            raise ValueError("power_snr_db must exceed audio_snr_db")

    def snr_db(self, rec_type):
        return self.power_snr_db if RecType(rec_type) is RecType.POWER else self.audio_snr_db


# Grids sharing a nominal frequency differ in long-term offset, deviation
# spread and persistence. Offsets are the first-order signature visible in
# every spectrogram frame.
DEFAULT_GRIDS = (
    SynthGridParams(GridLabel.A, 60, ar_coeff=0.95, deviation_std=0.02, mean_offset=-0.1),
    SynthGridParams(GridLabel.B, 50, ar_coeff=0.97, deviation_std=0.015, mean_offset=-0.2),
    SynthGridParams(GridLabel.C, 60, ar_coeff=0.55, deviation_std=0.04, mean_offset=0.0),
    SynthGridParams(GridLabel.D, 50, ar_coeff=0.5, deviation_std=0.03, mean_offset=-0.12),
    SynthGridParams(GridLabel.E, 50, ar_coeff=0.9, deviation_std=0.02, mean_offset=-0.04),
    SynthGridParams(GridLabel.F, 50, ar_coeff=0.3, deviation_std=0.035, mean_offset=0.04),
    SynthGridParams(GridLabel.G, 50, ar_coeff=0.8, deviation_std=0.025, mean_offset=0.12),
    SynthGridParams(GridLabel.H, 50, ar_coeff=0.6, deviation_std=0.04, mean_offset=0.2),
    SynthGridParams(GridLabel.I, 60, ar_coeff=0.85, deviation_std=0.03, mean_offset=0.1),
)

# Held-out grid for unknown-origin tests.
UNKNOWN_GRID = SynthGridParams(None, 50, ar_coeff=0.7, deviation_std=0.03, mean_offset=0.0)


def default_grid_params(audio_snr_db=None, power_snr_db=None):
    grids = list(DEFAULT_GRIDS)
    overrides = {}
    if audio_snr_db is not None:
        overrides["audio_snr_db"] = float(audio_snr_db)
    if power_snr_db is not None:
        overrides["power_snr_db"] = float(power_snr_db)
    return [replace(g, **overrides) for g in grids]


def simulate_deviation(params, duration, rng):
    """AR(1) ENF deviation path, one value per second, stationary std ``deviation_std``."""
    n_steps = int(np.ceil(duration / AR_STEP_SECONDS)) + 2
    if params.deviation_std == 0.0:
        return np.zeros(n_steps)
    a = params.ar_coeff
    innovations = rng.standard_normal(n_steps) * params.deviation_std * np.sqrt(1.0 - a * a)
    path = np.empty(n_steps)
    path[0] = rng.standard_normal() * params.deviation_std
    for i in range(1, n_steps):
        path[i] = a * path[i - 1] + innovations[i]
    return path


def synth_recording(params, duration, rec_type, seed, sample_rate=CANONICAL_RATE,
                    source_id=None, return_components=False):
    """Generate one labelled recording.

    With ``return_components=True`` also returns a dict holding the
    per-sample ENF deviation (``enf``), the fundamental (``fundamental``),
    the noiseless mixture (``clean``) and the noise (``noise``), all at the
    final output gain.
    """
    if duration < 300:
        raise ValueError(f"duration must be at least 300 s, got {duration}")
    rec_type = RecType(rec_type)
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    path = simulate_deviation(params, duration, rng)
    deviation = np.interp(t, np.arange(path.size) * AR_STEP_SECONDS, path)
    deviation = deviation + params.mean_offset
    phase = 2.0 * np.pi * np.cumsum(int(params.nominal) + deviation) / sample_rate
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=len(params.harmonic_weights))
    fundamental = params.harmonic_weights[0] * np.sin(phase + offsets[0])
    clean = fundamental.copy()
    for k, (w, phi) in enumerate(zip(params.harmonic_weights[1:], offsets[1:]), start=2):
        clean += w * np.sin(k * phase + phi)

    fund_power = params.harmonic_weights[0] ** 2 / 2.0
    band_noise = fund_power / 10.0 ** (params.snr_db(rec_type) / 10.0)
    noise_var = band_noise * (sample_rate / 2.0) / SNR_BAND_HZ
    noise = rng.standard_normal(n) * np.sqrt(noise_var)

    mix = clean + noise
    gain = PEAK_LEVEL / np.max(np.abs(mix))
    label = params.label
    rec = Recording(mix * gain, sample_rate, label=label, rec_type=rec_type,
                    nominal=params.nominal,
                    source_id=source_id or f"{label or 'X'}_{rec_type.value.lower()}_{seed}")
    if return_components:
        return rec, {"enf": deviation, "fundamental": fundamental * gain,
                     "clean": clean * gain, "noise": noise * gain}
    return rec


def derive_seed(root, *keys):
    """Stable 32-bit child seed from a root seed and hashable keys."""
    entropy = [int(root)] + [int(hashlib.sha256(str(k).encode()).hexdigest()[:8], 16) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass
class CorpusSpec:
    grids: list = field(default_factory=default_grid_params)
    unknown: Optional[SynthGridParams] = UNKNOWN_GRID
    per_grid_minutes: float = 60.0
    max_recording_minutes: float = 60.0
    test_minutes: float = 10.0
    test_per_grid: int = 1
    unknown_tests: int = 2
    rec_types: tuple = (RecType.AUDIO, RecType.POWER)


def corpus_plan(spec, seed):
    """Enumerate ``(split, params, rec_type, minutes, seed, name)`` for every recording."""
    plan = []
    for params in spec.grids:
        for rec_type in spec.rec_types:
            remaining, idx = spec.per_grid_minutes, 0
            while remaining >= 5:
                minutes = min(spec.max_recording_minutes, remaining)
                name = f"{params.label}_{rec_type.value.lower()}_{idx:02d}"
                plan.append(("train", params, rec_type, minutes,
                             derive_seed(seed, "train", params.label, rec_type.value, idx), name))
                remaining -= minutes
                idx += 1
            for idx in range(spec.test_per_grid):
                name = f"test_{params.label}_{rec_type.value.lower()}_{idx:02d}"
                plan.append(("test", params, rec_type, spec.test_minutes,
                             derive_seed(seed, "test", params.label, rec_type.value, idx), name))
    if spec.unknown is not None:
        for rec_type in spec.rec_types:
            for idx in range(spec.unknown_tests):
                name = f"test_X_{rec_type.value.lower()}_{idx:02d}"
                plan.append(("test", spec.unknown, rec_type, spec.test_minutes,
                             derive_seed(seed, "unknown", rec_type.value, idx), name))
    return plan


def synth_corpus_memory(spec, seed):
    """Generate the corpus in memory: ``{"train": [...], "test": [...]}`` of recordings."""
    out = {"train": [], "test": []}
    for split, params, rec_type, minutes, rec_seed, name in corpus_plan(spec, seed):
        out[split].append(synth_recording(params, minutes * 60.0, rec_type, rec_seed, source_id=name))
    return out


def synth_corpus(grid_params, per_grid_minutes, seed, out_dir, **spec_kwargs):
    """Write a synthetic corpus as 16-bit WAV files plus manifests.

    ``manifest.tsv`` lists the training recordings. ``test_manifest.tsv``
    lists 10-minute test recordings; held-out unknown-grid recordings carry
    label ``?``. Returns the two manifest paths.
    """
    spec = CorpusSpec(grids=list(grid_params), per_grid_minutes=per_grid_minutes, **spec_kwargs)
    if len({g.label for g in spec.grids}) != len(spec.grids):
        raise ValueError("duplicate grid labels")
    out_dir = Path(out_dir)
    (out_dir / "train").mkdir(parents=True, exist_ok=True)
    (out_dir / "test").mkdir(parents=True, exist_ok=True)
    rows = {"train": [], "test": []}
    for split, params, rec_type, minutes, rec_seed, name in corpus_plan(spec, seed):
        rec = synth_recording(params, minutes * 60.0, rec_type, rec_seed, source_id=name)
        rel = Path(split) / f"{name}.wav"
        write_wav(out_dir / rel, rec)
        rows[split].append((rel.as_posix(), params.label, rec_type))
    train_manifest = out_dir / "manifest.tsv"
    test_manifest = out_dir / "test_manifest.tsv"
    write_manifest(train_manifest, rows["train"])
    write_manifest(test_manifest, rows["test"])
    return train_manifest, test_manifest
