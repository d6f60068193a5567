"""Plane-orthogonal-to-skin pulse extraction.

Each sliding window of the fused RGB series is divided by its channel means,
projected onto the two axes ``G - B`` and ``G + B - 2R`` (both orthogonal to
the normalized skin-tone direction ``(1, 1, 1)``), and the projections are
mixed with the ratio of their standard deviations. The mean-subtracted window
outputs are overlap-added, divided by the per-sample window count, and the
result is restricted to the pulse band.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BandOutOfRange,
    DegenerateWindow,
    InvalidConfig,
    MalformedRow,
    NonPositiveSample,
    TraceTooShort,
)
from .trace import CombinedSeries

# below this std of the second projection the mixing ratio is undefined
SINGULAR_STD = 1e-12
TAPER_HZ = 0.1
MIN_WINDOW_FRAMES = 8


@dataclass(frozen=True)
class PosConfig:
    window_seconds: float = 1.6
    stride_frames: int = 1
    band_lo_hz: float = 0.7
    band_hi_hz: float = 4.0

    def __post_init__(self):
        if not (0 < self.band_lo_hz < self.band_hi_hz):
            raise InvalidConfig(f"need 0 < band_lo_hz < band_hi_hz, got {self.band_lo_hz}, {self.band_hi_hz}")
        if not (self.window_seconds > 0):
            raise InvalidConfig("window_seconds must be positive")
        if int(self.stride_frames) != self.stride_frames or self.stride_frames < 1:
            raise InvalidConfig("stride_frames must be a positive integer")

    def window_frames(self, fs: float) -> int:
        n = int(round(self.window_seconds * fs))
        if n < MIN_WINDOW_FRAMES:
            raise InvalidConfig(
                f"window of {self.window_seconds} s at {fs} Hz is {n} frames (< {MIN_WINDOW_FRAMES})"
            )
        return n


@dataclass(frozen=True, eq=False)
class PulseSignal:
    fs: float
    samples: np.ndarray
    t0: float = 0.0

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.fs


def temporal_normalize(r, g, b):
    """Divide each channel by its own mean over the window."""
    chans = [np.asarray(c, dtype=float) for c in (r, g, b)]
    n = len(chans[0])
    if any(len(c) != n for c in chans):
        raise ValueError("channel arrays differ in length")
    if n < 2:
        raise DegenerateWindow(f"window of length {n}")
    if any(np.any(~(c > 0)) for c in chans):
        raise NonPositiveSample("window contains a non-positive sample")
    return tuple(c / c.mean() for c in chans)


def pos_project_window(rn, gn, bn) -> np.ndarray:
    s1 = np.asarray(gn) - np.asarray(bn)
    s2 = np.asarray(gn) + np.asarray(bn) - 2.0 * np.asarray(rn)
    sd2 = s2.std()
    if sd2 < SINGULAR_STD:
        h = s1
    else:
        h = s1 + (s1.std() / sd2) * s2
    return h - h.mean()


def _project_windows(series: CombinedSeries, L: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised normalize+project for every window; returns (starts, chunks)."""
    rgb = series.rgb
    win = sliding_window_view(rgb, L, axis=0)[::stride]  # (W, 3, L)
    norm = win / win.mean(axis=2, keepdims=True)
    rn, gn, bn = norm[:, 0], norm[:, 1], norm[:, 2]
    s1 = gn - bn
    s2 = gn + bn - 2.0 * rn
    sd1 = s1.std(axis=1)
    sd2 = s2.std(axis=1)
    singular = sd2 < SINGULAR_STD
    alpha = np.where(singular, 0.0, sd1 / np.where(singular, 1.0, sd2))
    h = s1 + alpha[:, None] * s2
    h -= h.mean(axis=1, keepdims=True)
    starts = np.arange(h.shape[0]) * stride
    return starts, h


def pos_pipeline(series: CombinedSeries, cfg: PosConfig | None = None) -> PulseSignal:
    cfg = cfg or PosConfig()
    L = cfg.window_frames(series.fs)
    n = len(series)
    if n < L:
        raise TraceTooShort(f"{n} frames is shorter than the {L}-frame window")

    starts, chunks = _project_windows(series, L, cfg.stride_frames)
    out = np.zeros(n)
    cover = np.zeros(n)
    for j in range(L):
        # starts are distinct, so fancy-index accumulation is exact per column
        out[starts + j] += chunks[:, j]
        cover[starts + j] += 1
    # edge samples are covered by fewer windows; equalise so edge beats keep their height
    out /= np.maximum(cover, 1)

    out = bandpass(out, series.fs, cfg.band_lo_hz, cfg.band_hi_hz)
    return PulseSignal(series.fs, out, series.t0)


def band_mask(freqs: np.ndarray, lo: float, hi: float, taper: float = TAPER_HZ) -> np.ndarray:
    """1 on [lo, hi], raised-cosine roll-off to 0 over ``taper`` Hz outside each edge."""
    mask = np.zeros_like(freqs, dtype=float)
    mask[(freqs >= lo) & (freqs <= hi)] = 1.0
    low = (freqs > lo - taper) & (freqs < lo)
    mask[low] = 0.5 * (1 - np.cos(np.pi * (freqs[low] - (lo - taper)) / taper))
    high = (freqs > hi) & (freqs < hi + taper)
    mask[high] = 0.5 * (1 + np.cos(np.pi * (freqs[high] - hi) / taper))
    return mask


def bandpass(signal, fs: float, lo: float, hi: float) -> np.ndarray:
    """Zero-phase FFT-mask band-pass, length preserving."""
    x = np.asarray(signal, dtype=float)
    if not (0 < lo < hi):
        raise BandOutOfRange(f"need 0 < lo < hi, got [{lo}, {hi}]")
    if hi >= fs / 2:
        raise BandOutOfRange(f"upper edge {hi} Hz is not below Nyquist {fs / 2} Hz")
    if len(x) < 4:
        raise TraceTooShort(f"bandpass needs >= 4 samples, got {len(x)}")
    spec = np.fft.rfft(x)
    spec *= band_mask(np.fft.rfftfreq(len(x), 1.0 / fs), lo, hi)
    return np.fft.irfft(spec, n=len(x))


def serialize_pulse(pulse: PulseSignal) -> str:
    buf = io.StringIO()
    buf.write(f"# fs={float(pulse.fs)!r}\n")
    buf.write("t,value\n")
    for t, v in zip(pulse.times, pulse.samples):
        buf.write(f"{float(t)!r},{float(v)!r}\n")
    return buf.getvalue()


def parse_pulse(document: str) -> PulseSignal:
    fs = None
    t, v = [], []
    header = False
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "fs":
                try:
                    fs = float(val)
                except ValueError:
                    raise MalformedRow(lineno, "bad fs comment") from None
            continue
        if not header:
            if line.replace(" ", "") != "t,value":
                raise MalformedRow(lineno, "expected header 't,value'")
            header = True
            continue
        parts = line.split(",")
        try:
            t.append(float(parts[0]))
            v.append(float(parts[1]))
        except (ValueError, IndexError):
            raise MalformedRow(lineno, "expected 't,value'") from None
    if fs is None:
        raise MalformedRow(1, "missing '# fs=<Hz>' comment")
    return PulseSignal(fs, np.asarray(v), t[0] if t else 0.0)
