import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffibp.audio_io import (
    AudioClip,
    BPLabel,
    CorruptFile,
    InvalidWindow,
    PreprocessConfig,
    UnsupportedFormat,
    frame,
    load_wav,
    preprocess,
    write_wav,
)

from conftest import sine


def _write_pcm(path, data: np.ndarray, fs=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(fs)
        wf.writeframes(data.tobytes())


def test_load_silence(tmp_path):
    p = tmp_path / "z.wav"
    _write_pcm(p, np.zeros(16000, dtype="<i2"))
    clip = load_wav(p)
    assert clip.sample_rate_hz == 16000
    assert clip.samples.size == 16000
    assert np.all(clip.samples == 0.0)


def test_load_full_scale(tmp_path):
    p = tmp_path / "max.wav"
    _write_pcm(p, np.full(100, 32767, dtype="<i2"))
    clip = load_wav(p)
    assert np.allclose(clip.samples, 1.0, atol=2**-15)


def test_stereo_is_averaged(tmp_path):
    p = tmp_path / "st.wav"
    pcm = np.tile(np.array([16384, -16384], dtype="<i2"), 500)
    _write_pcm(p, pcm, channels=2)
    clip = load_wav(p)
    assert clip.samples.size == 500
    assert np.all(clip.samples == 0.0)


def test_rejects_8_bit(tmp_path):
    p = tmp_path / "u8.wav"
    _write_pcm(p, np.full(100, 128, dtype=np.uint8), width=1)
    with pytest.raises(UnsupportedFormat):
        load_wav(p)


def test_rejects_float_format(tmp_path):
    p = tmp_path / "f32.wav"
    data = np.zeros(10, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, 16000, 64000, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(UnsupportedFormat):
        load_wav(p)


def test_truncated_data_is_corrupt(tmp_path):
    p = tmp_path / "cut.wav"
    _write_pcm(p, np.arange(1000, dtype="<i2"))
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) - 501])
    with pytest.raises(CorruptFile):
        load_wav(p)


def test_truncated_header_is_corrupt(tmp_path):
    p = tmp_path / "hdr.wav"
    _write_pcm(p, np.arange(100, dtype="<i2"))
    p.write_bytes(p.read_bytes()[:20])
    with pytest.raises(CorruptFile):
        load_wav(p)


def test_write_then_load_roundtrip(tmp_path):
    x = 0.5 * sine(440, 1600, 16000)
    write_wav(tmp_path / "s.wav", x, 16000)
    clip = load_wav(tmp_path / "s.wav")
    assert np.max(np.abs(clip.samples - x)) < 2 / 32768


def test_clip_invariants():
    with pytest.raises(ValueError):
        AudioClip(np.zeros(0), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.array([2.0]), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 4000)
    with pytest.raises(ValueError):
        BPLabel(80, 120)


# -- preprocess ----------------------------------------------------------------


def test_constant_becomes_zero():
    out = preprocess(AudioClip(np.full(2000, 0.3), 16000))
    assert np.all(out.samples == 0.0)


def test_silence_fixed_point():
    out = preprocess(AudioClip(np.zeros(2000), 16000))
    assert np.all(out.samples == 0.0)


def _snr_db(y, clean):
    # best-gain projection onto the clean reference; the rest counts as noise
    g = (y @ clean) / (clean @ clean)
    residual = y - g * clean
    return 10 * np.log10((g * g * (clean @ clean)) / (residual @ residual))


def test_line_enhancer_improves_snr():
    fs = 16000
    clean = sine(200, fs, fs)
    rng = np.random.default_rng(3)
    noise = rng.standard_normal(fs)
    noise *= np.sqrt(np.mean(clean**2) / np.mean(noise**2))
    noisy = clean + noise
    noisy = noisy / (1.01 * np.max(np.abs(noisy)))
    snr_in = _snr_db(noisy, clean)
    out = preprocess(AudioClip(noisy, fs)).samples
    assert abs(snr_in) < 0.2
    assert _snr_db(out, clean) > snr_in + 3.0


def test_output_zero_mean_and_peak_normalized():
    rng = np.random.default_rng(0)
    x = 0.4 * sine(180, 4000, 16000) + 0.1 * rng.standard_normal(4000) + 0.2
    out = preprocess(AudioClip(np.clip(x, -1, 1), 16000)).samples
    assert abs(out.mean()) < 1e-6
    assert np.max(np.abs(out)) == pytest.approx(1.0)


@pytest.mark.xfail(
    strict=True,
    reason="an adaptive filter restarted from zero weights re-learns on every pass, so a second pass differs by O(1) in the warm-up",
)
def test_preprocess_idempotent():
    rng = np.random.default_rng(1)
    x = 0.5 * sine(200, 8000, 16000) + 0.1 * rng.standard_normal(8000)
    once = preprocess(AudioClip(x, 16000))
    twice = preprocess(once)
    assert np.max(np.abs(twice.samples - once.samples)) < 1e-6


def test_preprocess_without_normalization_stays_in_range():
    x = 0.3 * sine(200, 4000, 16000)
    out = preprocess(AudioClip(x, 16000), PreprocessConfig(normalize=False)).samples
    assert np.max(np.abs(out)) <= 1.0


# -- framing -------------------------------------------------------------------


@pytest.mark.parametrize("n,flen,hop,expected", [(100, 100, 1, 1), (400, 200, 100, 3), (399, 200, 100, 2)])
def test_frame_counts(n, flen, hop, expected):
    seq = frame(AudioClip(np.zeros(n), 16000), flen, hop)
    assert len(seq) == expected
    assert seq.frames.shape == (expected, flen)


@pytest.mark.parametrize("flen,hop", [(0, 10), (10, 0), (-1, 1), (101, 10)])
def test_frame_rejects_bad_windows(flen, hop):
    with pytest.raises(InvalidWindow):
        frame(AudioClip(np.zeros(100), 16000), flen, hop)


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=500),
    flen=st.integers(min_value=1, max_value=100),
    seed=st.integers(0, 2**16),
)
def test_non_overlapping_frames_rebuild_prefix(n, flen, seed):
    if flen > n:
        flen = n
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    seq = frame(x, flen, flen, 16000)
    rebuilt = seq.frames.ravel()
    assert np.array_equal(rebuilt, x[: rebuilt.size])
    assert rebuilt.size == (n // flen) * flen
