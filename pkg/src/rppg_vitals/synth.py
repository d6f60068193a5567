"""Synthetic traces and RR series with known ground truth, plus a brute-force
spectral peak oracle that shares no code with the HR estimator.

All randomness comes from numpy's PCG64 bit generator seeded explicitly, so
outputs are reproducible across runs and platforms.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FlatSpectrum, InvalidParameter
from .trace import RgbTrace, RoiStream
from .vitals import RR_MAX_MS, RR_MIN_MS, RrSeries

BASELINE_RGB = (140.0, 110.0, 95.0)
PULSE_STRENGTH_RGB = (0.5, 1.0, 0.6)
SYNTH_ROI = "synthetic"


@dataclass(frozen=True)
class SynthGroundTruth:
    hr_bpm: float
    pulse_hz: float
    beat_times_s: list[float] = field(repr=False)
    amplitude_frac: float
    noise_sigma_frac: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def synth_trace(
    hr_bpm: float,
    duration_s: float,
    fs: float,
    amplitude_frac: float = 0.01,
    noise_sigma_frac: float = 0.0,
    seed: int = 0,
) -> tuple[RgbTrace, SynthGroundTruth]:
    """Single-ROI sinusoidal pulse trace sampled at ``t = k/fs``."""
    if not (42 <= hr_bpm <= 240):
        raise InvalidParameter(f"hr_bpm must lie in [42, 240], got {hr_bpm}")
    if not (duration_s >= 10):
        raise InvalidParameter(f"duration_s must be >= 10, got {duration_s}")
    if not (fs >= 10):
        raise InvalidParameter(f"fs must be >= 10, got {fs}")
    if not (0 < amplitude_frac <= 0.1):
        raise InvalidParameter(f"amplitude_frac must lie in (0, 0.1], got {amplitude_frac}")
    if not (0 <= noise_sigma_frac <= 0.05):
        raise InvalidParameter(f"noise_sigma_frac must lie in [0, 0.05], got {noise_sigma_frac}")

    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    f = hr_bpm / 60.0
    wave = np.sin(2 * np.pi * f * t)
    rng = _rng(seed)
    chans = []
    for base, strength in zip(BASELINE_RGB, PULSE_STRENGTH_RGB):
        c = base * (1.0 + strength * amplitude_frac * wave)
        if noise_sigma_frac > 0:
            c = c + rng.normal(0.0, noise_sigma_frac * base, size=n)
        chans.append(c)

    # sine maxima: t = (k + 1/4) / f
    period = 60.0 / hr_bpm
    beats = [(k + 0.25) * period for k in range(int(math.ceil(duration_s / period)) + 1)]
    beats = [b for b in beats if b < n / fs]

    trace = RgbTrace({SYNTH_ROI: RoiStream(SYNTH_ROI, t, *chans)}, float(fs))
    truth = SynthGroundTruth(
        hr_bpm=float(hr_bpm),
        pulse_hz=f,
        beat_times_s=beats,
        amplitude_frac=float(amplitude_frac),
        noise_sigma_frac=float(noise_sigma_frac),
        seed=int(seed),
    )
    return trace, truth


def synth_rr(mean_ms: float, jitter_ms: float, count: int, seed: int = 0) -> RrSeries:
    if not (RR_MIN_MS <= mean_ms <= RR_MAX_MS):
        raise InvalidParameter(f"mean_ms must lie in [{RR_MIN_MS}, {RR_MAX_MS}], got {mean_ms}")
    if jitter_ms < 0:
        raise InvalidParameter("jitter_ms must be >= 0")
    if count < 2:
        raise InvalidParameter("count must be >= 2")
    rr = mean_ms + _rng(seed).normal(0.0, jitter_ms, size=count) if jitter_ms > 0 else np.full(count, float(mean_ms))
    return RrSeries(np.clip(rr, RR_MIN_MS, RR_MAX_MS))


def dense_spectral_peak(signal, fs: float, lo_hz: float, hi_hz: float, step_hz: float = 0.01) -> float:
    """Argmax of the DTFT magnitude on a dense grid, evaluated by direct summation."""
    x = np.asarray(signal, dtype=float)
    if len(x) / fs < 10 - 1e-9:
        raise InvalidParameter(f"need >= 10 s of signal, got {len(x) / fs:.3f} s")
    scale = np.abs(x).max() if len(x) else 0.0
    x = x - x.mean()
    if scale == 0 or np.abs(x).max() <= 1e-12 * scale:
        raise FlatSpectrum("signal is constant")
    n_steps = int(round((hi_hz - lo_hz) / step_hz))
    grid = lo_hz + step_hz * np.arange(n_steps + 1)
    n = np.arange(len(x))
    mags = np.empty(len(grid))
    for i, f in enumerate(grid):
        mags[i] = abs(np.sum(x * np.exp(-2j * np.pi * f * n / fs)))
    if mags.max() < 3 * np.median(mags):
        raise FlatSpectrum("no dominant spectral peak")
    return float(grid[int(np.argmax(mags))])
