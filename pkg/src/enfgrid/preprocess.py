"""Band-limited noise augmentation, magnitude spectrograms and nominal-band focusing."""

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .labels import NominalFreq
from .signal_io import CANONICAL_RATE, SegmentSample

AUGMENT_SNR_DB = 20.0
AUGMENT_HALFWIDTH_HZ = 1.0
FOCUS_HALFWIDTH_HZ = 1.0
_BAND_EPS = 1e-9


@dataclass(frozen=True)
class SpecParams:
    window_len: int = 2000
    hop: int = 1000
    fft_len: int = 4000
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_len:
            raise ValueError(f"need 0 < hop <= window_len <= fft_len, got {self}")

    def n_frames(self, n_samples):
        if n_samples < self.window_len:
            raise ValueError(f"segment of {n_samples} samples is shorter than the "
                             f"{self.window_len}-sample window")
        return 1 + (n_samples - self.window_len) // self.hop

    def freq_axis(self, sample_rate):
        return np.arange(self.fft_len // 2 + 1) * (sample_rate / self.fft_len)


@dataclass
class Spectrogram:
    mags: np.ndarray
    freq_axis: np.ndarray
    time_axis: np.ndarray
    params: SpecParams
    sample_rate: int


@dataclass
class FocusedSpectrogram:
    mags: np.ndarray
    freq_axis: np.ndarray
    time_axis: np.ndarray
    nominal: NominalFreq
    halfwidth: float
    params: SpecParams
    scale: float = 1.0


def _samples_and_rate(seg, sample_rate=None):
    if isinstance(seg, SegmentSample):
        return np.asarray(seg.samples, dtype=np.float64), seg.sample_rate
    return np.asarray(seg, dtype=np.float64), int(sample_rate or CANONICAL_RATE)


def band_mask(freqs, center, halfwidth):
    return np.abs(freqs - center) <= halfwidth + _BAND_EPS


def band_power(samples, sample_rate, center, halfwidth):
    """Mean power of the signal components inside ``center +/- halfwidth`` Hz."""
    n = samples.size
    spec = np.fft.rfft(samples)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    weights = np.full(spec.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    mask = band_mask(freqs, center, halfwidth)
    return float(np.sum(weights[mask] * np.abs(spec[mask]) ** 2) / n ** 2)


def bandlimited_noise(n, sample_rate, center, halfwidth, rng):
    """White Gaussian noise restricted to ``center +/- halfwidth`` Hz, unit variance."""
    spec = np.fft.rfft(rng.standard_normal(n))
    spec[~band_mask(np.fft.rfftfreq(n, 1.0 / sample_rate), center, halfwidth)] = 0.0
    noise = np.fft.irfft(spec, n)
    std = noise.std()
    if std == 0:
        raise ValueError("noise band contains no frequency bins")
    return noise / std


def augment_noise(seg, snr_db=AUGMENT_SNR_DB, seed=0, nominal=None,
                  halfwidth=AUGMENT_HALFWIDTH_HZ, sample_rate=None):
    """Add white noise confined to the nominal band at a given in-band SNR.

    The noise is drawn broadband and band-pass filtered in the frequency
    domain. ``snr_db=inf`` returns the input unchanged. Works on a
    :class:`SegmentSample` (returning a new one) or a bare array.
    """
    samples, rate = _samples_and_rate(seg, sample_rate)
    if nominal is None:
        nominal = getattr(seg, "nominal", None)
    if nominal is None:
        raise ValueError("nominal frequency required for augmentation")
    if np.isinf(snr_db) and snr_db > 0:
        return seg
    signal_power = band_power(samples, rate, int(nominal), halfwidth)
    if not signal_power > 0:
        raise ValueError("segment has no in-band signal power to augment against")
    noise_power = signal_power / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = bandlimited_noise(samples.size, rate, int(nominal), halfwidth, rng) * np.sqrt(noise_power)
    out = samples + noise
    if isinstance(seg, SegmentSample):
        return seg.with_samples(out, augmented_snr_db=float(snr_db), augment_seed=int(seed))
    return out


def spectrogram(seg, params=SpecParams(), sample_rate=None):
    """Magnitude STFT with ``1 + (len - window_len) // hop`` frames."""
    samples, rate = _samples_and_rate(seg, sample_rate)
    n_frames = params.n_frames(samples.size)
    taper = get_window(params.window, params.window_len)
    frames = sliding_window_view(samples, params.window_len)[::params.hop][:n_frames]
    mags = np.abs(np.fft.rfft(frames * taper, n=params.fft_len, axis=1)).T
    time_axis = (np.arange(n_frames) * params.hop + params.window_len / 2.0) / rate
    return Spectrogram(mags, params.freq_axis(rate), time_axis, params, rate)


def focus(spec, nominal, halfwidth=FOCUS_HALFWIDTH_HZ):
    """Restrict to ``|f - nominal| <= halfwidth`` and scale the band's maximum to 1."""
    nominal = NominalFreq(int(nominal))
    lo, hi = int(nominal) - halfwidth, int(nominal) + halfwidth
    if lo < spec.freq_axis[0] or hi > spec.freq_axis[-1]:
        raise ValueError(f"band [{lo}, {hi}] Hz lies outside the spectrogram axis")
    rows = band_mask(spec.freq_axis, int(nominal), halfwidth)
    mags = spec.mags[rows]
    peak = float(mags.max()) if mags.size else 0.0
    if peak > 0:
        mags = mags / peak
    return FocusedSpectrogram(mags, spec.freq_axis[rows], spec.time_axis, nominal,
                              float(halfwidth), spec.params, scale=peak if peak > 0 else 1.0)


def focused_shape(n_samples, params=SpecParams(), halfwidth=FOCUS_HALFWIDTH_HZ,
                  sample_rate=CANONICAL_RATE, nominal=50):
    rows = band_mask(params.freq_axis(sample_rate), nominal, halfwidth).sum()
    return int(rows), params.n_frames(n_samples)


class SpectrogramFocuser(TransformerMixin, BaseEstimator):
    """Turn raw 5-minute segments into focused, max-normalised spectrogram grids.

    Parameters
    ----------
    nominal : {50, 60}
        Centre of the focus band.
    halfwidth : float, default=1.0
        Focus band half-width in Hz.
    window_len, hop, fft_len, window
        STFT parameters, see :class:`SpecParams`.
    sample_rate : int, default=1000

    ``transform`` maps ``X`` of shape (n_segments, n_samples) to an array of
    shape (n_segments, n_freq, n_frames).
    """

    def __init__(self, nominal=50, halfwidth=FOCUS_HALFWIDTH_HZ, window_len=2000, hop=1000,
                 fft_len=4000, window="hann", sample_rate=CANONICAL_RATE):
        self.nominal = nominal
        self.halfwidth = halfwidth
        self.window_len = window_len
        self.hop = hop
        self.fft_len = fft_len
        self.window = window
        self.sample_rate = sample_rate

    @property
    def spec_params(self):
        return SpecParams(self.window_len, self.hop, self.fft_len, self.window)

    def fit(self, X, y=None):
        X = self._check(X)
        self.output_shape_ = focused_shape(X.shape[1], self.spec_params, self.halfwidth,
                                           self.sample_rate, int(self.nominal))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "output_shape_")
        X = self._check(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected segments of {self.n_features_in_} samples, got {X.shape[1]}")
        params = self.spec_params
        out = np.empty((X.shape[0],) + self.output_shape_)
        for i, row in enumerate(X):
            out[i] = focus(spectrogram(row, params, self.sample_rate), self.nominal, self.halfwidth).mags
        return out

    @staticmethod
    def _check(X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise ValueError(f"expected (n_segments, n_samples) array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("segments contain NaN or infinite values")
        return X


# ENFSPC01: magic, n_items, n_freq, n_time, json length; JSON; freq/time axes
# (float64); grids (float32, n_items x n_freq x n_time).
SPEC_MAGIC = b"ENFSPC01"
_SPC_HEADER = struct.Struct("<8sIIII")


def write_focused(path, grids, freq_axis, time_axis, nominal, halfwidth, params, items=None):
    grids = np.asarray(grids, dtype="<f4")
    if grids.ndim == 2:
        grids = grids[None]
    n, nf, nt = grids.shape
    if len(freq_axis) != nf or len(time_axis) != nt:
        raise ValueError("axis lengths do not match grid dimensions")
    meta = json.dumps({"nominal": int(nominal), "halfwidth": float(halfwidth),
                       "params": asdict(params), "items": items or []}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_SPC_HEADER.pack(SPEC_MAGIC, n, nf, nt, len(meta)))
        fh.write(meta)
        fh.write(np.asarray(freq_axis, dtype="<f8").tobytes())
        fh.write(np.asarray(time_axis, dtype="<f8").tobytes())
        fh.write(grids.tobytes())


def read_focused(path):
    """Return ``(grids, freq_axis, time_axis, meta)`` from an ENFSPC01 file."""
    raw = Path(path).read_bytes()
    magic, n, nf, nt, meta_len = _SPC_HEADER.unpack_from(raw)
    if magic != SPEC_MAGIC:
        raise OSError(f"{path}: bad magic {magic!r}")
    pos = _SPC_HEADER.size
    meta = json.loads(raw[pos:pos + meta_len])
    pos += meta_len
    freq_axis = np.frombuffer(raw, "<f8", nf, pos)
    pos += 8 * nf
    time_axis = np.frombuffer(raw, "<f8", nt, pos)
    pos += 8 * nt
    grids = np.frombuffer(raw, "<f4", n * nf * nt, pos).reshape(n, nf, nt).astype(np.float64)
    meta["params"] = SpecParams(**meta["params"])
    return grids, freq_axis.copy(), time_axis.copy(), meta
