import math

import numpy as np
import pytest
from scipy.signal import lfilter

from ffibp.harness import SyntheticSpec, generate_synthetic, read_manifest


def sine(freq_hz, n, fs, amp=1.0, phase=0.0):
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)


def two_pole_pairs(freqs, bws, fs):
    """Denominator of a cascade of resonators with the given centre frequencies."""
    a = np.array([1.0])
    for f, bw in zip(freqs, bws):
        r = math.exp(-math.pi * bw / fs)
        a = np.convolve(a, [1.0, -2 * r * math.cos(2 * math.pi * f / fs), r * r])
    return a


def resonant_signal(freqs=(700.0, 1200.0), bws=(100.0, 100.0), fs=16000, n=800, f0=100.0):
    excitation = np.zeros(n)
    excitation[:: int(fs / f0)] = 1.0
    return lfilter([1.0], two_pole_pairs(freqs, bws, fs), excitation)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    generate_synthetic(SyntheticSpec(clips_per_class=10, seed=7), out)
    return out


@pytest.fixture(scope="session")
def manifest(corpus_dir):
    return read_manifest(corpus_dir / "manifest.csv")


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
