import numpy as np
import pytest

from echokit import SampleBuffer, ToneConfig


@pytest.fixture
def tone_cfg():
    return ToneConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bandnoise(rng, n, fs, f_lo, f_hi):
    """White noise confined to [f_lo, f_hi] via FFT masking."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    return np.fft.irfft(spec, n)


def speechlike(rng, fs=16000, seconds=3.0):
    """Envelope-modulated multiband noise; intelligibility-metric friendly."""
    n = int(fs * seconds)
    t = np.arange(n) / fs
    out = np.zeros(n)
    for f_lo, f_hi in ((150, 400), (400, 1000), (1000, 2500), (2500, 4300)):
        band = bandnoise(rng, n, fs, f_lo, f_hi)
        rate = rng.uniform(1.5, 5.0)
        env = 0.5 * (1.0 + np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
        out += band * env
    return SampleBuffer(fs, out / np.max(np.abs(out)))
