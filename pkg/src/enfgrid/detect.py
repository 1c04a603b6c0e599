"""Resolve nominal frequency and recording type of unlabelled recordings."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .labels import NominalFreq, RecType

logger = logging.getLogger(__name__)

HARMONIC = 2
BAND_HALFWIDTH_HZ = 1.0
SNR_THRESHOLD_DB = 15.0
# max band energy must exceed this multiple of the expected noise energy
NOISE_FLOOR_FACTOR = 1.25
FLOOR_RANGE_HZ = (80.0, 140.0)
FLANK_HZ = (2.0, 5.0)
MIN_SECONDS = 60.0


class NoENFDetected(ValueError):
    """Neither nominal frequency shows harmonic energy above the noise floor."""


@dataclass(frozen=True)
class DetectReport:
    nominal: NominalFreq
    nominal_margin: float
    rec_type: RecType
    snr_estimate_db: float
    tie: bool = False

    def as_row(self):
        return [str(self.rec_type), str(int(self.nominal)), f"{self.nominal_margin:.4g}",
                f"{self.snr_estimate_db:.2f}"]


def power_spectrum(samples, sample_rate):
    """Hann-windowed periodogram of the whole recording, ``(freqs, power)``."""
    x = np.asarray(samples, dtype=np.float64)
    taper = get_window("hann", x.size)
    spec = np.fft.rfft((x - x.mean()) * taper)
    power = np.abs(spec) ** 2 / np.sum(taper ** 2)
    return np.fft.rfftfreq(x.size, 1.0 / sample_rate), power


def _band(freqs, lo, hi):
    return (freqs >= lo) & (freqs <= hi)


def _median_bin_power(power):
    # periodogram bins of white noise are exponential; median = ln 2 * mean
    return float(np.median(power)) / np.log(2.0)


def _spectrum(rec, min_seconds):
    if rec.duration < min_seconds:
        raise ValueError(f"need at least {min_seconds:.0f} s of audio, got {rec.duration:.1f} s")
    return power_spectrum(rec.samples, rec.sample_rate)


def detect_nominal(rec, harmonic=HARMONIC, halfwidth=BAND_HALFWIDTH_HZ,
                   floor_factor=NOISE_FLOOR_FACTOR, spectrum=None):
    """Compare harmonic band energy at ``harmonic * 50`` vs ``harmonic * 60`` Hz.

    Returns ``(nominal, margin)`` with margin = winner / loser energy. A tie
    resolves to 50 Hz and is logged.
    """
    freqs, power = spectrum or _spectrum(rec, MIN_SECONDS)
    energies = {}
    for nominal in NominalFreq:
        centre = harmonic * int(nominal)
        mask = _band(freqs, centre - halfwidth, centre + halfwidth)
        energies[nominal] = (float(power[mask].sum()), int(mask.sum()))
    floor_mask = _band(freqs, *FLOOR_RANGE_HZ)
    noise_bin = _median_bin_power(power[floor_mask])
    e50, n50 = energies[NominalFreq.HZ50]
    e60, n60 = energies[NominalFreq.HZ60]
    if e50 < floor_factor * noise_bin * n50 and e60 < floor_factor * noise_bin * n60:
        raise NoENFDetected(f"{rec.source_id or 'recording'}: no ENF detected")
    if e50 == e60:
        logger.warning("%s: equal harmonic energy at 50/60 Hz, choosing 50 Hz", rec.source_id)
        return NominalFreq.HZ50, 1.0
    if e50 > e60:
        return NominalFreq.HZ50, e50 / max(e60, np.finfo(float).tiny)
    return NominalFreq.HZ60, e60 / max(e50, np.finfo(float).tiny)


def estimate_snr_db(rec, nominal, halfwidth=BAND_HALFWIDTH_HZ, spectrum=None):
    """In-band ENF SNR: excess energy in ``nominal +/- halfwidth`` over the noise
    expected there, from the median of the flanking bands."""
    freqs, power = spectrum or _spectrum(rec, MIN_SECONDS)
    f0 = int(nominal)
    band = _band(freqs, f0 - halfwidth, f0 + halfwidth)
    near, far = FLANK_HZ
    flanks = _band(freqs, f0 - far, f0 - near) | _band(freqs, f0 + near, f0 + far)
    noise = _median_bin_power(power[flanks]) * band.sum()
    excess = float(power[band].sum()) - noise
    if noise <= 0:
        return float("inf")
    return 10.0 * np.log10(max(excess, noise * 1e-6) / noise)


def classify_rectype(snr_db, threshold_db=SNR_THRESHOLD_DB):
    return RecType.POWER if snr_db >= threshold_db else RecType.AUDIO


def detect_rectype(rec, nominal=None, threshold_db=SNR_THRESHOLD_DB, spectrum=None):
    """Power recordings carry a much cleaner ENF line than microphone audio."""
    nominal = nominal if nominal is not None else rec.nominal
    if nominal is None:
        raise ValueError("nominal frequency must be resolved before the recording type")
    snr = estimate_snr_db(rec, nominal, spectrum=spectrum)
    return classify_rectype(snr, threshold_db), snr


def detect(rec, threshold_db=SNR_THRESHOLD_DB):
    spectrum = _spectrum(rec, MIN_SECONDS)
    nominal, margin = detect_nominal(rec, spectrum=spectrum)
    rec_type, snr = detect_rectype(rec, nominal, threshold_db, spectrum=spectrum)
    return DetectReport(nominal, margin, rec_type, snr, tie=margin == 1.0)
