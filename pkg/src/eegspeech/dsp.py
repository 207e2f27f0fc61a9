"""Shared signal-processing primitives.

IIR design and zero-phase filtering, polyphase resampling, the power STFT, and
the ~31 Hz frame grid used by both the EEG and audio feature extractors.
Filter design and filtering are backed by scipy.signal; the STFT is computed
directly so the frame-count contract is explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy import signal as sps


@dataclass(frozen=True)
class IirFilter:
    """Cascade of second-order sections, coefficient layout (b0,b1,b2,1,a1,a2)."""

    sos: np.ndarray
    description: str = ""

    def __post_init__(self):
        sos = np.atleast_2d(np.asarray(self.sos, dtype=np.float64))
        if sos.shape[1] != 6:
            raise ValueError("sos sections must have 6 coefficients")
        if not np.all(np.isfinite(sos)):
            raise ValueError("non-finite filter coefficients")
        # normalize a0 to 1 per section
        sos = sos / sos[:, 3:4]
        object.__setattr__(self, "sos", sos)
        if not self.is_stable():
            raise ValueError(f"unstable filter: {self.description}")

    @property
    def order(self) -> int:
        return 2 * self.sos.shape[0]

    def pole_magnitudes(self) -> np.ndarray:
        mags = []
        for sec in self.sos:
            poles = np.roots([1.0, sec[4], sec[5]])
            mags.extend(np.abs(poles))
        return np.asarray(mags)

    def is_stable(self) -> bool:
        return bool(np.all(self.pole_magnitudes() < 1.0))

    def response(self, freqs_hz, fs_hz: float) -> np.ndarray:
        """Complex frequency response H(e^{j2*pi*f/fs}) at the given frequencies."""
        z = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs_hz)
        h = np.ones_like(z)
        for b0, b1, b2, _, a1, a2 in self.sos:
            h = h * (b0 + b1 * z + b2 * z * z) / (1.0 + a1 * z + a2 * z * z)
        return h


def design_butterworth_bandpass(
    order: int = 4, lo_hz: float = 0.1, hi_hz: float = 70.0, fs_hz: float = 1000.0
) -> IirFilter:
    """Butterworth band-pass: analog low-pass prototype of `order`, band-transformed.

    The digital filter has 2*order poles (order sections); the -3 dB points sit
    at lo_hz and hi_hz.
    """
    if not (0 < lo_hz < hi_hz < fs_hz / 2):
        raise ValueError(f"invalid band edges lo={lo_hz} hi={hi_hz} for fs={fs_hz}")
    sos = sps.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=fs_hz, output="sos")
    desc = (
        f"butterworth-bandpass order={order} (analog prototype, {2 * order} digital poles) "
        f"lo={lo_hz}Hz hi={hi_hz}Hz fs={fs_hz}Hz"
    )
    return IirFilter(sos, desc)


def design_iir_notch(f0_hz: float = 60.0, q: float = 30.0, fs_hz: float = 1000.0) -> IirFilter:
    """Second-order notch with a true zero at f0_hz; -3 dB bandwidth f0/q."""
    if not (0 < f0_hz < fs_hz / 2):
        raise ValueError(f"invalid notch frequency {f0_hz} for fs={fs_hz}")
    b, a = sps.iirnotch(f0_hz, q, fs=fs_hz)
    sos = np.hstack([b, a])[None, :]
    return IirFilter(sos, f"iir-notch f0={f0_hz}Hz q={q} fs={fs_hz}Hz")


def filtfilt(filt: IirFilter, x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Zero-phase forward-backward filtering (squared magnitude response)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] <= 3 * filt.order:
        raise ValueError(f"signal too short for filtfilt: {x.shape[axis]} <= 3*{filt.order}")
    return sps.sosfiltfilt(filt.sos, x, axis=axis)


def lfilter(filt: IirFilter, x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Causal single-pass filtering."""
    return sps.sosfilt(filt.sos, np.asarray(x, dtype=np.float64), axis=axis)


def apply_filter(filt: IirFilter, x: np.ndarray, zero_phase: bool = True, axis: int = -1) -> np.ndarray:
    return filtfilt(filt, x, axis=axis) if zero_phase else lfilter(filt, x, axis=axis)


def resample_poly(x: np.ndarray, from_hz: int = 16000, to_hz: int = 15000) -> np.ndarray:
    """Polyphase rational resampling by to/from after gcd reduction.

    Output length is round(len(x) * to / from); the anti-aliasing low-pass is
    part of the polyphase kernel.
    """
    if int(from_hz) != from_hz or int(to_hz) != to_hz or from_hz <= 0 or to_hz <= 0:
        raise ValueError("sample rates must be positive integers")
    from_hz, to_hz = int(from_hz), int(to_hz)
    x = np.asarray(x, dtype=np.float64)
    g = gcd(from_hz, to_hz)
    up, down = to_hz // g, from_hz // g
    if up == down:
        return x.copy()
    y = sps.resample_poly(x, up, down)
    n_out = int(round(len(x) * to_hz / from_hz))
    return y[:n_out]


@dataclass(frozen=True)
class FrameGrid:
    """Analysis grid realizing a ~31 Hz frame rate with an integer hop."""

    sample_rate_hz: int
    hop: int
    window_len: int
    target_rate_hz: float = 31.0

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.window_len < self.hop:
            raise ValueError("window_len must be >= hop")
        if abs(self.sample_rate_hz / self.hop - self.target_rate_hz) >= 0.5:
            raise ValueError(
                f"hop {self.hop} does not realize ~{self.target_rate_hz} Hz at fs={self.sample_rate_hz}"
            )

    @property
    def effective_rate_hz(self) -> float:
        return self.sample_rate_hz / self.hop


def frame_grid_for_rate(fs_hz: int, target_rate: float = 31.0, window_len: int | None = None) -> FrameGrid:
    """Integer-hop grid closest to target_rate: hop = round(fs / target)."""
    if fs_hz < target_rate:
        raise ValueError(f"sample rate {fs_hz} too small for a {target_rate} Hz grid")
    hop = int(round(fs_hz / target_rate))
    return FrameGrid(int(fs_hz), hop, hop if window_len is None else window_len, target_rate)


def frame_count(n_samples: int, hop: int) -> int:
    """Frame count of the centered STFT / centered framing: 1 + floor(n/hop)."""
    return 1 + n_samples // hop


def frame_signal_valid(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Non-centered valid-mode framing: (1 + (n-window)//hop, window) view."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n < window:
        raise ValueError(f"signal shorter than one window ({n} < {window})")
    n_frames = 1 + (n - window) // hop
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window)[None, :]
    return x[..., idx]


def frame_signal_centered(x: np.ndarray, window: int, hop: int, pad_mode: str = "reflect") -> np.ndarray:
    """Centered framing: frame k covers samples around k*hop, count 1 + n//hop.

    Reflection padding needs n >= window//2 + 1.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    pad = window // 2
    if pad_mode == "reflect" and n < pad + 1:
        raise ValueError(f"signal shorter than one window ({n} samples, window {window})")
    xp = np.pad(x, pad, mode=pad_mode)
    n_frames = frame_count(n, hop)
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window)[None, :]
    return xp[idx]


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class PowerSpectrogram:
    """frames x bins non-negative power matrix; bins = fft_size // 2 + 1."""

    power: np.ndarray
    fft_size: int
    hop: int
    sample_rate_hz: int
    freqs_hz: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.power.shape[1] != self.fft_size // 2 + 1:
            raise ValueError("bin count must be fft_size/2 + 1")
        if np.any(self.power < 0):
            raise ValueError("negative spectrogram entry")
        object.__setattr__(
            self, "freqs_hz", np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate_hz)
        )

    @property
    def n_frames(self) -> int:
        return self.power.shape[0]


def stft_power(
    x: np.ndarray, fft_size: int, hop: int, fs_hz: int = 15000, window: str = "hann"
) -> PowerSpectrogram:
    """Power STFT |DFT|^2 with periodic Hann window and reflection center-padding.

    Frame count is 1 + floor(len(x)/hop): the signal is padded by fft_size/2 on
    both ends, so frame k is centered on sample k*hop.
    """
    if fft_size < 64 or fft_size & (fft_size - 1) != 0:
        raise ValueError("fft_size must be a power of two >= 64")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if window == "hann":
        win = hann_periodic(fft_size)
    elif window == "rect":
        win = np.ones(fft_size)
    else:
        raise ValueError(f"unsupported window {window!r}")
    frames = frame_signal_centered(x, fft_size, hop, pad_mode="reflect")
    spec = np.fft.rfft(frames * win[None, :], axis=1)
    power = np.abs(spec) ** 2
    return PowerSpectrogram(power, fft_size, hop, int(fs_hz))
