"""WAV loading, adaptive-filter denoising and framing of speech clips."""

from __future__ import annotations

import wave
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

MIN_SAMPLE_RATE_HZ = 8000
PCM16_SCALE = 32768.0
# far below one 16-bit step; rounding residue of DC removal stays under it
SILENCE_FLOOR = 1e-10


class UnsupportedFormat(ValueError):
    """File is readable RIFF but not 16-bit integer PCM."""


class CorruptFile(ValueError):
    """File is truncated or its chunk structure is broken."""


class InvalidWindow(ValueError):
    pass


@dataclass(frozen=True)
class BPLabel:
    systolic_mmhg: float
    diastolic_mmhg: float

    def __post_init__(self):
        if not (self.systolic_mmhg > self.diastolic_mmhg > 0):
            raise ValueError(
                f"need systolic > diastolic > 0, got {self.systolic_mmhg}/{self.diastolic_mmhg}"
            )


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    id: str = ""
    label: Optional[BPLabel] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if np.max(np.abs(samples)) > 1.0 + 1e-12:
            raise ValueError("samples must lie in [-1, 1]")
        if int(self.sample_rate_hz) < MIN_SAMPLE_RATE_HZ:
            raise ValueError(f"sample rate must be >= {MIN_SAMPLE_RATE_HZ} Hz")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray  # shape (n_frames, frame_len)
    frame_len: int
    hop: int
    sample_rate_hz: int

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class PreprocessConfig:
    """Settings of the denoising front end.

    The enhancer predicts each sample from the `filter_order` samples that
    precede it by `delay` samples; broadband noise is unpredictable and is
    rejected while periodic (voiced) structure passes.
    """

    filter_order: int = 32
    step_size: float = 0.1
    delay: int = 1
    eps: float = 1e-8
    normalize: bool = True


def load_wav(path: str | Path) -> AudioClip:
    """Read a 16-bit PCM WAV file as a mono clip scaled to [-1, 1].

    Multi-channel input is averaged to mono.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg or "RIFF" in msg or "WAVE" in msg:
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptFile(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise CorruptFile(f"{path}: truncated header") from exc

    if width != 2:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit samples, only 16-bit PCM supported")
    if len(raw) != n_frames * n_channels * width:
        raise CorruptFile(
            f"{path}: data chunk holds {len(raw)} bytes, header promises {n_frames * n_channels * width}"
        )
    if n_frames == 0:
        raise CorruptFile(f"{path}: no audio frames")

    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    pcm = pcm.reshape(-1, n_channels).mean(axis=1)
    # +32767 maps to 1 - 2**-15; -32768 maps to exactly -1
    samples = pcm / PCM16_SCALE
    return AudioClip(samples=samples, sample_rate_hz=rate, id=path.stem)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate_hz: int) -> None:
    """Write mono float samples in [-1, 1] as 16-bit PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate_hz))
        wf.writeframes(pcm.tobytes())


def nlms_line_enhancer(
    x: np.ndarray, order: int = 32, mu: float = 0.1, delay: int = 1, eps: float = 1e-8
) -> np.ndarray:
    """Adaptive line enhancer driven by normalized LMS.

    Returns the filter prediction y[n] = w . x[n-delay-order+1 .. n-delay], which
    keeps the correlated part of `x`. Weights start at zero, so the first
    samples are attenuated until the filter converges.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    y = np.zeros(n)
    w = np.zeros(order)
    # padded[i + order + delay - 1] == x[i]; the regressor for sample i is
    # padded[i : i + order] reversed (newest first)
    padded = np.concatenate([np.zeros(order + delay - 1), x])
    for i in range(n):
        u = padded[i : i + order][::-1]
        yi = w @ u
        e = x[i] - yi
        w += (mu / (eps + u @ u)) * e * u
        y[i] = yi
    return y


def preprocess(clip: AudioClip, cfg: PreprocessConfig | None = None) -> AudioClip:
    """Remove DC, denoise with the line enhancer and peak-normalize."""
    cfg = cfg or PreprocessConfig()
    x = clip.samples - clip.samples.mean()
    if np.max(np.abs(x)) <= SILENCE_FLOOR:
        return replace(clip, samples=np.zeros_like(x))
    y = nlms_line_enhancer(x, cfg.filter_order, cfg.step_size, cfg.delay, cfg.eps)
    y = y - y.mean()
    peak = np.max(np.abs(y))
    if cfg.normalize and peak > 0:
        y = y / peak
    elif peak > 1.0:
        y = y / peak
    return replace(clip, samples=y)


def frame(clip: AudioClip | np.ndarray, frame_len: int, hop: int, sample_rate_hz: int | None = None) -> FrameSequence:
    """Cut a signal into overlapping windows; a trailing partial window is dropped."""
    if isinstance(clip, AudioClip):
        x, rate = clip.samples, clip.sample_rate_hz
    else:
        x = np.asarray(clip, dtype=np.float64)
        rate = sample_rate_hz or 0
    frame_len, hop = int(frame_len), int(hop)
    if frame_len <= 0 or hop <= 0:
        raise InvalidWindow(f"frame_len and hop must be positive, got {frame_len}, {hop}")
    if frame_len > x.size:
        raise InvalidWindow(f"frame_len {frame_len} exceeds signal length {x.size}")
    n_frames = (x.size - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return FrameSequence(frames=x[idx], frame_len=frame_len, hop=hop, sample_rate_hz=rate)


def frame_params(sample_rate_hz: int, frame_ms: float = 25.0, hop_ms: float = 10.0) -> tuple[int, int]:
    return int(round(sample_rate_hz * frame_ms / 1000.0)), int(round(sample_rate_hz * hop_ms / 1000.0))
