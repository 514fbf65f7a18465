"""Acoustic-prosodic feature extraction.

Frame-level low-level descriptors (f0, RMS loudness, jitter, shimmer, HNR,
alpha ratio, Hammarberg index, two spectral slopes) are computed over
25 ms frames at a configurable step (1 ms default) and summarized into a
fixed-order 11-dimensional per-utterance feature vector.

Voicing uses the normalized autocorrelation peak, so every descriptor except
RMS loudness is invariant to amplitude scaling. All routines are pure and
deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .base import DataError

__all__ = [
    "AudioClip",
    "AcousticConfig",
    "LldFrameSeries",
    "DEFAULT_FEATURE_NAMES",
    "read_wav",
    "write_wav",
    "resample",
    "frame_count",
    "compute_llds",
    "summarize",
    "extract_features",
    "write_feature_csv",
    "read_feature_csv",
]

DEFAULT_FEATURE_NAMES = (
    "f0_mean",
    "f0_std",
    "loudness_mean",
    "loudness_std",
    "jitter_mean",
    "shimmer_mean",
    "hnr_mean",
    "alpha_ratio_mean",
    "hammarberg_mean",
    "slope_0_500_mean",
    "slope_500_1500_mean",
)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DataError(f"clip must be mono (1-D), got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DataError("clip contains non-finite samples")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AcousticConfig:
    target_rate: int = 16000
    frame_step_ms: float = 1.0
    frame_length_ms: float = 25.0
    f0_min: float = 60.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.45
    feature_names: tuple[str, ...] = field(default=DEFAULT_FEATURE_NAMES)

    def __post_init__(self):
        if self.frame_step_ms <= 0 or self.frame_length_ms <= 0:
            raise DataError("frame step and length must be positive")
        if self.frame_step_ms > self.frame_length_ms:
            raise DataError(
                f"frame_step_ms {self.frame_step_ms} exceeds frame_length_ms "
                f"{self.frame_length_ms}"
            )
        if not (0 < self.f0_min < self.f0_max):
            raise DataError(f"bad f0 range [{self.f0_min}, {self.f0_max}]")

    @property
    def frame_length(self):
        return int(round(self.frame_length_ms * self.target_rate / 1000.0))

    @property
    def frame_step(self):
        return max(1, int(round(self.frame_step_ms * self.target_rate / 1000.0)))


@dataclass(frozen=True)
class LldFrameSeries:
    """Per-frame descriptor tracks; jitter/shimmer are NaN where undefined
    (first frame and unvoiced pairs), f0 is 0 on unvoiced frames."""

    times: np.ndarray
    voiced: np.ndarray
    f0: np.ndarray
    loudness: np.ndarray
    jitter: np.ndarray
    shimmer: np.ndarray
    hnr: np.ndarray
    alpha_ratio: np.ndarray
    hammarberg: np.ndarray
    slope_0_500: np.ndarray
    slope_500_1500: np.ndarray

    def __len__(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# WAV I/O (linear PCM, 16-bit int or 32/64-bit float; stereo downmixed)
# ---------------------------------------------------------------------------

def read_wav(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DataError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise DataError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format == 0xFFFE and len(payload) >= 0:  # WAVE_FORMAT_EXTENSIBLE
        raise DataError(f"{path}: extensible WAV not supported")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32767.0
    elif audio_format == 1 and bits == 32:
        samples = np.frombuffer(payload, dtype="<i4").astype(np.float64) / 2147483648.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    elif audio_format == 3 and bits == 64:
        samples = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported WAV format ({audio_format}, {bits} bit)")
    if channels > 1:
        samples = samples[: len(samples) - len(samples) % channels]
        samples = samples.reshape(-1, channels).mean(axis=1)
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav(clip, path):
    """Write mono 16-bit PCM."""
    scaled = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(scaled * 32767.0).astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16
    )
    with open(path, "wb") as fh:
        fh.write(header + fmt + b"data" + struct.pack("<I", len(pcm)) + pcm)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

_SINC_HALF_ZEROS = 32


def resample(clip, target_rate):
    """Band-limited windowed-sinc resampling (Hann-windowed kernel)."""
    if target_rate <= 0:
        raise DataError(f"target rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    ratio = target_rate / clip.sample_rate
    n_out = int(round(len(clip.samples) * ratio))
    cutoff = min(1.0, ratio) * 0.945
    half_width = _SINC_HALF_ZEROS / cutoff
    half_taps = int(np.ceil(half_width))
    x = np.pad(clip.samples, (half_taps + 1, half_taps + 1))
    out = np.empty(n_out, dtype=np.float64)
    offsets = np.arange(-half_taps, half_taps + 1)
    block = 1 << 15
    for start in range(0, n_out, block):
        idx_out = np.arange(start, min(start + block, n_out))
        t = idx_out / ratio
        base = np.floor(t).astype(np.int64)
        frac = t - base
        # tap positions relative to the exact center
        dist = offsets[None, :] - frac[:, None]
        kernel = cutoff * np.sinc(cutoff * dist)
        window = np.where(
            np.abs(dist) <= half_width,
            0.5 + 0.5 * np.cos(np.pi * dist / half_width),
            0.0,
        )
        taps = kernel * window
        gather = x[(base[:, None] + offsets[None, :]) + half_taps + 1]
        out[idx_out] = (gather * taps).sum(axis=1)
    return AudioClip(samples=out, sample_rate=int(target_rate))


# ---------------------------------------------------------------------------
# Low-level descriptors
# ---------------------------------------------------------------------------

def frame_count(n_samples, frame_length, frame_step):
    if n_samples < frame_length:
        return 0
    return (n_samples - frame_length) // frame_step + 1


def _frame_matrix(samples, frame_length, frame_step):
    n = frame_count(len(samples), frame_length, frame_step)
    if n == 0:
        raise DataError(
            f"clip of {len(samples)} samples is shorter than one frame ({frame_length})"
        )
    view = np.lib.stride_tricks.sliding_window_view(samples, frame_length)
    return view[:: frame_step][:n]


def compute_llds(clip, config):
    """Frame-level descriptors for a clip already at ``config.target_rate``."""
    if clip.sample_rate != config.target_rate:
        raise DataError(
            f"clip rate {clip.sample_rate} != configured rate {config.target_rate}; "
            "resample first"
        )
    frame_length = config.frame_length
    step = config.frame_step
    frames = _frame_matrix(clip.samples, frame_length, step)
    n = frames.shape[0]
    rate = config.target_rate
    times = (np.arange(n) * step + frame_length / 2.0) / rate

    loudness = np.sqrt(np.mean(frames * frames, axis=1))

    centered = frames - frames.mean(axis=1, keepdims=True)

    # autocorrelation by Wiener-Khinchin on zero-padded frames
    nfft_ac = 1 << int(np.ceil(np.log2(2 * frame_length)))
    spectrum_ac = np.fft.rfft(centered, n=nfft_ac, axis=1)
    autocorr = np.fft.irfft(spectrum_ac.real**2 + spectrum_ac.imag**2, axis=1)
    autocorr = autocorr[:, :frame_length]
    r0 = autocorr[:, 0]
    lag_min = max(2, int(np.floor(rate / config.f0_max)))
    lag_max = min(frame_length - 2, int(np.ceil(rate / config.f0_min)))
    if lag_min >= lag_max:
        raise DataError("f0 search range empty; frame too short for f0_min")
    safe_r0 = np.where(r0 > 0, r0, 1.0)
    # unbiased lag normalization: lag tau sums only L - tau products; the
    # gain is capped because the tail estimate gets noisy as L - tau shrinks
    lag_gain = frame_length / (frame_length - np.arange(frame_length, dtype=np.float64))
    lag_gain = np.minimum(lag_gain, 2.0)
    norm_ac = autocorr / safe_r0[:, None] * lag_gain[None, :]
    search = norm_ac[:, lag_min : lag_max + 1]
    # peaks at period multiples have near-equal height; the true period is
    # the first local maximum within tolerance of the global maximum
    is_peak = np.ones_like(search, dtype=bool)
    is_peak[:, 1:] &= search[:, 1:] >= search[:, :-1]
    is_peak[:, :-1] &= search[:, :-1] >= search[:, 1:]
    global_max = search.max(axis=1, keepdims=True)
    candidate = is_peak & (search >= global_max - 0.15)
    peak_rel = np.argmax(candidate, axis=1)
    peak_lag = peak_rel + lag_min
    peak_val = search[np.arange(n), peak_rel]

    # parabolic interpolation around the integer-lag peak
    left = norm_ac[np.arange(n), peak_lag - 1]
    right = norm_ac[np.arange(n), peak_lag + 1]
    denom = left - 2.0 * peak_val + right
    curved = np.abs(denom) > 1e-12
    shift = np.where(curved, 0.5 * (left - right) / np.where(curved, denom, 1.0), 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    refined_lag = peak_lag + shift

    voiced = (r0 > 0) & (peak_val >= config.voicing_threshold)
    f0 = np.where(voiced, rate / refined_lag, 0.0)

    peak_clipped = np.clip(peak_val, 1e-6, 1.0 - 1e-6)
    hnr = np.where(voiced, 10.0 * np.log10(peak_clipped / (1.0 - peak_clipped)), 0.0)

    # spectral measures from the Hann-windowed magnitude spectrum
    window = np.hanning(frame_length)
    nfft = 1 << int(np.ceil(np.log2(frame_length)))
    spectrum = np.abs(np.fft.rfft(centered * window, n=nfft, axis=1))
    freqs = np.fft.rfftfreq(nfft, d=1.0 / rate)
    power = spectrum * spectrum

    alpha_ratio = _band_ratio_db(power, freqs, (50.0, 1000.0), (1000.0, 5000.0))
    hammarberg = _peak_ratio_db(spectrum, freqs, (0.0, 2000.0), (2000.0, 5000.0))
    slope_0_500 = _spectral_slope_db_per_octave(spectrum, freqs, 0.0, 500.0)
    slope_500_1500 = _spectral_slope_db_per_octave(spectrum, freqs, 500.0, 1500.0)

    # jitter reflects raw period perturbation; the stored f0 track is then
    # median-smoothed to suppress isolated octave glitches
    jitter = _perturbation(f0, voiced)
    shimmer = _perturbation(loudness, voiced)
    f0 = _median_smooth_voiced(f0, voiced)

    return LldFrameSeries(
        times=times,
        voiced=voiced,
        f0=f0,
        loudness=loudness,
        jitter=jitter,
        shimmer=shimmer,
        hnr=hnr,
        alpha_ratio=alpha_ratio,
        hammarberg=hammarberg,
        slope_0_500=slope_0_500,
        slope_500_1500=slope_500_1500,
    )


def _median_smooth_voiced(f0, voiced, width=5):
    """Median-filter f0 across the voiced subsequence; unvoiced frames stay 0."""
    out = f0.copy()
    vpos = np.flatnonzero(voiced)
    if len(vpos) < 3:
        return out
    values = f0[vpos]
    half = width // 2
    for k in range(len(vpos)):
        lo = max(0, k - half)
        hi = min(len(vpos), k + half + 1)
        out[vpos[k]] = np.median(values[lo:hi])
    return out


def _perturbation(track, voiced):
    """Relative frame-to-frame change over consecutive voiced frames."""
    n = len(track)
    out = np.full(n, np.nan)
    if n < 2:
        return out
    pair_ok = voiced[1:] & voiced[:-1]
    mean_level = 0.5 * (track[1:] + track[:-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(np.diff(track)) / mean_level
    out[1:] = np.where(pair_ok & (mean_level > 0), rel, np.nan)
    return out


def _band_ratio_db(power, freqs, low_band, high_band):
    low = power[:, (freqs >= low_band[0]) & (freqs <= low_band[1])].sum(axis=1)
    high = power[:, (freqs > high_band[0]) & (freqs <= high_band[1])].sum(axis=1)
    ok = (low > 0) & (high > 0)
    with np.errstate(divide="ignore"):
        ratio = np.where(ok, 10.0 * np.log10(np.where(ok, low, 1.0) / np.where(ok, high, 1.0)), 0.0)
    return ratio


def _peak_ratio_db(spectrum, freqs, low_band, high_band):
    low = spectrum[:, (freqs >= low_band[0]) & (freqs <= low_band[1])].max(axis=1)
    high = spectrum[:, (freqs > high_band[0]) & (freqs <= high_band[1])].max(axis=1)
    ok = (low > 0) & (high > 0)
    with np.errstate(divide="ignore"):
        ratio = np.where(ok, 20.0 * np.log10(np.where(ok, low, 1.0) / np.where(ok, high, 1.0)), 0.0)
    return ratio


def _spectral_slope_db_per_octave(spectrum, freqs, f_lo, f_hi):
    """Least-squares slope of dB magnitude against log2 frequency in a band."""
    mask = (freqs > max(f_lo, 0.0)) & (freqs <= f_hi) & (freqs > 0)
    band = spectrum[:, mask]
    log_f = np.log2(freqs[mask])
    n_frames, n_bins = band.shape
    out = np.zeros(n_frames)
    if n_bins < 2:
        return out
    positive = band > 0
    usable = positive.sum(axis=1) >= 2
    if not usable.any():
        return out
    db = np.where(positive, 20.0 * np.log10(np.where(positive, band, 1.0)), 0.0)
    # per-frame masked least squares on (log2 f, dB)
    w = positive.astype(np.float64)
    sw = w.sum(axis=1)
    sx = (w * log_f).sum(axis=1)
    sy = (w * db).sum(axis=1)
    sxx = (w * log_f * log_f).sum(axis=1)
    sxy = (w * log_f * db).sum(axis=1)
    denom = sw * sxx - sx * sx
    good = usable & (np.abs(denom) > 1e-12)
    out[good] = (sw[good] * sxy[good] - sx[good] * sy[good]) / denom[good]
    return out


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

def _voiced_mean(values, voiced):
    return float(values[voiced].mean()) if voiced.any() else 0.0


def _voiced_std(values, voiced):
    return float(values[voiced].std()) if voiced.any() else 0.0


def _valid_mean(values):
    valid = values[~np.isnan(values)]
    return float(valid.mean()) if valid.size else 0.0


_FUNCTIONALS = {
    "f0_mean": lambda s: _voiced_mean(s.f0, s.voiced),
    "f0_std": lambda s: _voiced_std(s.f0, s.voiced),
    "loudness_mean": lambda s: float(s.loudness.mean()),
    "loudness_std": lambda s: float(s.loudness.std()),
    "jitter_mean": lambda s: _valid_mean(s.jitter),
    "shimmer_mean": lambda s: _valid_mean(s.shimmer),
    "hnr_mean": lambda s: _voiced_mean(s.hnr, s.voiced),
    "alpha_ratio_mean": lambda s: float(s.alpha_ratio.mean()),
    "hammarberg_mean": lambda s: float(s.hammarberg.mean()),
    "slope_0_500_mean": lambda s: float(s.slope_0_500.mean()),
    "slope_500_1500_mean": lambda s: float(s.slope_500_1500.mean()),
}


def summarize(series, config):
    """Collapse a frame series to the configured functional vector."""
    if len(series) == 0:
        raise DataError("cannot summarize an empty frame series")
    values = []
    for name in config.feature_names:
        if name not in _FUNCTIONALS:
            raise DataError(
                f"unknown functional {name!r}; known: {sorted(_FUNCTIONALS)}"
            )
        values.append(_FUNCTIONALS[name](series))
    vec = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise DataError("functional vector contains non-finite values")
    return vec


def extract_features(clip, config):
    """resample -> LLDs -> functionals, in one call."""
    clip = resample(clip, config.target_rate)
    return summarize(compute_llds(clip, config), config)


def write_feature_csv(path, features, feature_names):
    """``features``: mapping utterance id -> feature vector."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(feature_names) + "\n")
        for utt_id, vec in features.items():
            fh.write(utt_id + "," + ",".join(repr(float(v)) for v in vec) + "\n")


def read_feature_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "id":
            raise DataError(f"{path}: first column must be 'id'")
        names = tuple(header[1:])
        features = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names) + 1:
                raise DataError(f"{path}: row has {len(parts)} fields, expected {len(names) + 1}")
            features[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
    return features, names
