"""Per-frame speech descriptors and the clip-level feature vector.

Every per-frame function is pure and takes a 1-D float array. Silent input is
a fixed point (returns 0) rather than an error wherever a value is defined.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.fft import dct, rfft, rfftfreq
from scipy.linalg import solve_toeplitz

from .audio_io import AudioClip, FrameSequence, frame, frame_params

PITCH_MIN_HZ = 50.0
PITCH_MAX_HZ = 500.0
VOICING_THRESHOLD = 0.3
N_MFCC = 13
N_MEL_FILTERS = 26
LOG_FLOOR = 1e-10
PRE_EMPHASIS = 0.97
FORMANT_MAX_BW_HZ = 400.0
FORMANT_MIN_HZ = 90.0

FEATURE_NAMES: tuple[str, ...] = (
    "zcr",
    "delta_zcr",
    "haar_energy_approx",
    "haar_energy_detail",
    "pitch_hz",
    "loudness_rms",
    "spectral_entropy",
    *(f"mel_lpc_{i + 1}" for i in range(N_MFCC)),
    "variance",
    "mean",
    "harmonic_ratio",
    "spectral_centroid_hz",
    "energy",
    "formant1_hz",
    "formant2_hz",
    "formant1_amp",
    "formant2_amp",
    "formant1_bw",
    "formant2_bw",
)
FORMANT_FIELDS = FEATURE_NAMES[-6:]


class TooFewFrames(ValueError):
    pass


class NoFormantsFound(ValueError):
    pass


class NoVoicedFrames(ValueError):
    pass


@dataclass(frozen=True)
class Formant:
    frequency_hz: float
    amplitude: float
    bandwidth_hz: float


@dataclass
class FeatureConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_mfcc: int = N_MFCC
    n_mel_filters: int = N_MEL_FILTERS


@dataclass
class FeatureVector:
    values: np.ndarray
    clip_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {self.values.shape}")

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, map(float, self.values)))

    @property
    def mel_lpc(self) -> np.ndarray:
        start = FEATURE_NAMES.index("mel_lpc_1")
        return self.values[start : start + N_MFCC]

    @property
    def mfcc1(self) -> float:
        return float(self.mel_lpc[0])

    @property
    def mfcc2(self) -> float:
        return float(self.mel_lpc[1])

    @property
    def mfcc3(self) -> float:
        return float(self.mel_lpc[2])

    @property
    def has_formants(self) -> bool:
        return bool(np.all(np.isfinite(self.values[-6:])))


def _as_frame(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("frame must be a non-empty 1-D array")
    return x


def zero_crossing_rate(frame_: np.ndarray) -> float:
    """Fraction of adjacent sample pairs whose signs strictly differ."""
    x = _as_frame(frame_)
    if x.size < 2:
        return 0.0
    return float(np.count_nonzero(x[:-1] * x[1:] < 0) / (x.size - 1))


def delta_zero_crossing(frames: FrameSequence | np.ndarray) -> np.ndarray:
    """First difference of the per-frame zero-crossing rate."""
    arr = frames.frames if isinstance(frames, FrameSequence) else np.asarray(frames)
    if arr.ndim == 1:
        zcr = arr.astype(np.float64)  # already a ZCR sequence
    else:
        zcr = np.array([zero_crossing_rate(f) for f in arr])
    if zcr.size < 2:
        raise TooFewFrames("need at least two frames")
    return np.diff(zcr)


def haar_features(frame_: np.ndarray) -> tuple[float, float]:
    """Mean squared approximation and detail coefficients of one Haar level."""
    x = _as_frame(frame_)
    if x.size % 2:
        x = np.append(x, 0.0)
    approx = (x[0::2] + x[1::2]) / np.sqrt(2.0)
    detail = (x[0::2] - x[1::2]) / np.sqrt(2.0)
    return float(np.mean(approx**2)), float(np.mean(detail**2))


def _lag_range(n: int, sample_rate_hz: float) -> tuple[int, int]:
    lo = max(1, int(np.floor(sample_rate_hz / PITCH_MAX_HZ)))
    # keep at least two periods of the longest searched lag inside the frame
    hi = min(int(np.ceil(sample_rate_hz / PITCH_MIN_HZ)), n // 2)
    return lo, hi


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    return np.fft.irfft(spec * np.conj(spec), nfft)[:n]


def pitch(frame_: np.ndarray, sample_rate_hz: float) -> Optional[float]:
    """Fundamental frequency from the autocorrelation peak, or None if unvoiced.

    The search covers 50-500 Hz, narrowed at the low end so that two periods
    fit in the frame. A peak below 0.3 of the zero-lag value means unvoiced.
    """
    x = _as_frame(frame_)
    x = x - x.mean()
    r = _autocorr(x)
    if r[0] <= 0:
        return None
    lo, hi = _lag_range(x.size, sample_rate_hz)
    if hi <= lo:
        return None
    seg = r[lo : hi + 1]
    k = lo + int(np.argmax(seg))
    if r[k] < VOICING_THRESHOLD * r[0] or k in (lo, hi):
        return None
    # parabolic refinement around the integer lag
    a, b, c = r[k - 1], r[k], r[k + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return float(sample_rate_hz / (k + shift))


def loudness(frame_: np.ndarray) -> float:
    x = _as_frame(frame_)
    return float(np.sqrt(np.mean(x**2)))


def _power_spectrum(x: np.ndarray, window: str = "hann") -> np.ndarray:
    w = np.hanning(x.size) if window == "hann" else np.hamming(x.size)
    return np.abs(rfft(x * w)) ** 2


def spectral_entropy(frame_: np.ndarray) -> float:
    """Shannon entropy of the normalized power spectrum over log(#bins); 0 for silence."""
    x = _as_frame(frame_)
    p = _power_spectrum(x)
    total = p.sum()
    if p.size < 2 or total <= 0:
        return 0.0
    p = p / total
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum() / np.log(p.size))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate_hz: float) -> np.ndarray:
    """Triangular filters evenly spaced on the mel scale from 0 to Nyquist."""
    n_bins = n_fft // 2 + 1
    freqs = rfftfreq(n_fft, 1.0 / sample_rate_hz)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_filters + 2))
    fb = np.zeros((n_filters, n_bins))
    for m in range(n_filters):
        left, centre, right = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - left) / (centre - left)
        down = (right - freqs) / (right - centre)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_lpc(frame_: np.ndarray, sample_rate_hz: float, n: int = N_MFCC, n_filters: int = N_MEL_FILTERS) -> np.ndarray:
    """Mel-frequency cepstral coefficients (log mel energies, orthonormal DCT-II)."""
    x = _as_frame(frame_)
    if x.size < 64:
        raise ValueError("mel_lpc needs at least 64 samples")
    p = _power_spectrum(x, window="hamming")
    energies = mel_filterbank(n_filters, x.size, sample_rate_hz) @ p
    log_e = np.log(np.maximum(energies, LOG_FLOOR))
    return dct(log_e, type=2, norm="ortho")[:n]


def spectral_centroid(frame_: np.ndarray, sample_rate_hz: float) -> float:
    """Power-weighted mean frequency in Hz; 0 for silence."""
    x = _as_frame(frame_)
    p = _power_spectrum(x)
    total = p.sum()
    if total <= 0:
        return 0.0
    freqs = rfftfreq(x.size, 1.0 / sample_rate_hz)
    return float((freqs * p).sum() / total)


def harmonic_ratio(frame_: np.ndarray, sample_rate_hz: float = 16000) -> float:
    """Largest normalized autocorrelation over the pitch lag range, in [0, 1]."""
    x = _as_frame(frame_)
    x = x - x.mean()
    lo, hi = _lag_range(x.size, sample_rate_hz)
    if hi < lo or not np.any(x):
        return 0.0
    # energy of the overlapping head/tail segments for each lag
    csum = np.concatenate([[0.0], np.cumsum(x**2)])
    r = _autocorr(x)
    lags = np.arange(lo, hi + 1)
    n = x.size
    e_head = csum[n - lags]
    e_tail = csum[n] - csum[lags]
    denom = np.sqrt(e_head * e_tail)
    with np.errstate(divide="ignore", invalid="ignore"):
        nacf = np.where(denom > 0, r[lags] / denom, 0.0)
    return float(np.clip(nacf.max(), 0.0, 1.0))


def lpc(x: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Autocorrelation-method LPC. Returns A(z) coefficients [1, a1..ap] and error power."""
    r = _autocorr(x)[: order + 1]
    if r[0] <= 0:
        raise NoFormantsFound("silent frame")
    a = solve_toeplitz(r[:order], -r[1 : order + 1])
    err = float(r[0] + r[1 : order + 1] @ a) / x.size
    return np.concatenate([[1.0], a]), max(err, 0.0)


def formants(frame_: np.ndarray, sample_rate_hz: float, n_keep: int = 2) -> list[Formant]:
    """Lowest formants from the roots of an LPC polynomial.

    Roots in the upper half plane with bandwidth below 400 Hz qualify. The
    amplitude is the LPC envelope magnitude at the formant frequency.
    """
    x = _as_frame(frame_)
    x = np.append(x[0], x[1:] - PRE_EMPHASIS * x[:-1]) * np.hamming(x.size)
    order = 2 + int(sample_rate_hz // 1000)
    if x.size <= order:
        raise NoFormantsFound("frame shorter than LPC order")
    a, err = lpc(x, order)
    gain = np.sqrt(err)
    roots = np.roots(a)
    roots = roots[np.imag(roots) > 0]
    out = []
    for z in roots:
        freq = float(np.angle(z) * sample_rate_hz / (2 * np.pi))
        bw = float(-sample_rate_hz / np.pi * np.log(np.abs(z)))
        if not (FORMANT_MIN_HZ < freq < sample_rate_hz / 2) or not (0 < bw < FORMANT_MAX_BW_HZ):
            continue
        w = 2 * np.pi * freq / sample_rate_hz
        resp = np.abs(np.polyval(a[::-1], np.exp(-1j * w)))
        out.append(Formant(freq, float(gain / resp), bw))
    out.sort(key=lambda f: f.frequency_hz)
    if len(out) < n_keep:
        raise NoFormantsFound(f"only {len(out)} qualifying roots")
    return out[:n_keep]


def extract_feature_vector(clip: AudioClip, cfg: FeatureConfig | None = None) -> FeatureVector:
    """Clip-level features: per-frame descriptors averaged over voiced frames.

    Formant fields are NaN when no voiced frame yields two formants; use
    `impute_formants` across a run to fill them.
    """
    cfg = cfg or FeatureConfig()
    fs = clip.sample_rate_hz
    flen, hop = frame_params(fs, cfg.frame_ms, cfg.hop_ms)
    frames = frame(clip, flen, hop).frames
    pitches = [pitch(f, fs) for f in frames]
    voiced = [i for i, p in enumerate(pitches) if p is not None]
    if not voiced:
        raise NoVoicedFrames(f"clip {clip.id!r} has no voiced frames")

    rows = []
    zcrs = []
    fmt_rows = []
    for i in voiced:
        f = frames[i]
        zcrs.append(zero_crossing_rate(f))
        ha, hd = haar_features(f)
        rows.append(
            [
                ha,
                hd,
                pitches[i],
                loudness(f),
                spectral_entropy(f),
                *mel_lpc(f, fs, cfg.n_mfcc, cfg.n_mel_filters),
                harmonic_ratio(f, fs),
                spectral_centroid(f, fs),
                float(np.sum(f**2)),
            ]
        )
        try:
            f1, f2 = formants(f, fs)
        except NoFormantsFound:
            continue
        fmt_rows.append([f1.frequency_hz, f2.frequency_hz, f1.amplitude, f2.amplitude, f1.bandwidth_hz, f2.bandwidth_hz])

    per_frame = np.mean(rows, axis=0)
    zcr_arr = np.asarray(zcrs)
    dz = float(np.mean(np.abs(np.diff(zcr_arr)))) if zcr_arr.size > 1 else 0.0
    fmt = np.mean(fmt_rows, axis=0) if fmt_rows else np.full(6, np.nan)
    ha, hd, p_hz, loud, ent = per_frame[:5]
    mfcc = per_frame[5 : 5 + cfg.n_mfcc]
    hr, cent, energy = per_frame[5 + cfg.n_mfcc :]
    values = np.concatenate(
        [
            [zcr_arr.mean(), dz, ha, hd, p_hz, loud, ent],
            mfcc,
            [np.var(clip.samples), np.mean(np.abs(clip.samples)), hr, cent, energy],
            fmt,
        ]
    )
    return FeatureVector(values, clip_id=clip.id)


def impute_formants(vectors: Sequence[FeatureVector], reference: Optional[Sequence[FeatureVector]] = None) -> list[FeatureVector]:
    """Replace missing formant fields by the mean over `reference` (default: all vectors)."""
    ref = np.array([v.values for v in (reference if reference is not None else vectors)])
    means = np.nanmean(ref[:, -6:], axis=0) if ref.size else np.full(6, np.nan)
    means = np.where(np.isfinite(means), means, 0.0)
    out = []
    for v in vectors:
        vals = v.values.copy()
        tail = vals[-6:]
        vals[-6:] = np.where(np.isfinite(tail), tail, means)
        out.append(FeatureVector(vals, v.clip_id))
    return out


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Standardizer":
        data = np.asarray(data, dtype=np.float64)
        sd = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) / self.scale


def write_feature_csv(path: str | Path, vectors: Iterable[FeatureVector]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", *FEATURE_NAMES])
        for v in vectors:
            w.writerow([v.clip_id, *(repr(float(x)) for x in v.values)])
