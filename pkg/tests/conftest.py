import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sine(freq_hz: float, fs_hz: float, duration_s: float, amplitude: float = 1.0, phase: float = 0.0):
    t = np.arange(int(round(duration_s * fs_hz))) / fs_hz
    return amplitude * np.sin(2.0 * np.pi * freq_hz * t + phase)


def sine_fit_amplitude(x: np.ndarray, freq_hz: float, fs_hz: float) -> float:
    """Least-squares amplitude of a known-frequency tone (independent oracle)."""
    t = np.arange(len(x)) / fs_hz
    basis = np.column_stack([np.sin(2 * np.pi * freq_hz * t), np.cos(2 * np.pi * freq_hz * t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.hypot(coef[0], coef[1]))
