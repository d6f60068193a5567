"""Cardiovascular parameters derived from a pulse waveform.

Heart rate comes from a Welch periodogram; beats come from thresholded local
maxima with a refractory period scaled to that heart rate. From the RR
intervals we compute PNN50, RMSSD, SDNN and Baevsky's stress index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import welch

from .errors import (
    InvalidParameter,
    NoPeaks,
    NoPulse,
    NoSpectralPeak,
    SignalTooShort,
    TooFewIntervals,
    TraceTooShort,
)
from .pos import PosConfig, PulseSignal, pos_pipeline
from .trace import CombinedSeries

RR_MIN_MS = 250.0
RR_MAX_MS = 3000.0
MIN_DURATION_S = 10.0
WELCH_SEGMENT_S = 10.0
PEAK_THRESHOLD_STD = 0.3
REFRACTORY_FRACTION = 0.6
PNN_THRESHOLD_MS = 50.0

SI_BIN_MS = 50
SI_LO_MS = 300
SI_HI_MS = 2000
SI_MIN_RANGE_S = 0.05
SI_MIN_INTERVALS = 10

# absolute slack on duration checks so 10 s at non-integer fs isn't rejected by rounding
_DURATION_EPS = 1e-6

OK = "ok"
DEGENERATE_VARIABILITY = "degenerate_variability"
LOW_BEAT_COUNT = "low_beat_count"


@dataclass(frozen=True, eq=False)
class RrSeries:
    intervals_ms: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        rr = np.asarray(self.intervals_ms, dtype=float)
        object.__setattr__(self, "intervals_ms", rr)
        if rr.ndim != 1 or len(rr) < 1:
            raise InvalidParameter("RR series needs at least one interval")
        if np.any(rr < RR_MIN_MS) or np.any(rr > RR_MAX_MS):
            raise InvalidParameter(f"RR intervals must lie in [{RR_MIN_MS}, {RR_MAX_MS}] ms")

    def __len__(self) -> int:
        return len(self.intervals_ms)

    @property
    def mean_ms(self) -> float:
        return float(self.intervals_ms.mean())


@dataclass(frozen=True, eq=False)
class VitalsReport:
    hr_bpm: float
    rr: RrSeries
    pnn50_pct: float | None
    rmssd_ms: float | None
    sdnn_ms: float | None
    stress_index: float | None
    quality: list[str] = field(default_factory=lambda: [OK])

    def to_dict(self) -> dict:
        return {
            "hr_bpm": self.hr_bpm,
            "rr": {"intervals_ms": [float(x) for x in self.rr.intervals_ms]},
            "pnn50_pct": self.pnn50_pct,
            "rmssd_ms": self.rmssd_ms,
            "sdnn_ms": self.sdnn_ms,
            "stress_index": self.stress_index,
            "quality": list(self.quality),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def _round_sig(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _round_sig(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_sig(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, compact separators, floats rounded to 6 significant digits."""
    return json.dumps(_round_sig(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _check_duration(pulse: PulseSignal):
    if pulse.duration < MIN_DURATION_S - _DURATION_EPS:
        raise SignalTooShort(f"{pulse.duration:.2f} s of signal, need >= {MIN_DURATION_S} s")


def estimate_hr(pulse: PulseSignal, lo_hz: float = 0.7, hi_hz: float = 4.0) -> float:
    """Spectral heart rate in bpm: Welch PSD peak in the band, parabolic-refined."""
    _check_duration(pulse)
    if pulse.fs < 2 * hi_hz:
        raise SignalTooShort(f"fs={pulse.fs} Hz cannot resolve {hi_hz} Hz")
    nperseg = min(int(round(WELCH_SEGMENT_S * pulse.fs)), len(pulse))
    freqs, psd = welch(
        pulse.samples, fs=pulse.fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend="constant", scaling="density",
    )
    in_band = np.flatnonzero((freqs >= lo_hz) & (freqs <= hi_hz))
    if len(in_band) == 0:
        raise NoSpectralPeak("no spectral bins inside the band")
    band = psd[in_band]
    k = int(in_band[np.argmax(band)])
    peak = psd[k]
    if not (peak > 0) or peak < 3 * np.median(band):
        raise NoSpectralPeak("spectrum has no dominant peak in the band")

    f = freqs[k]
    if 0 < k < len(psd) - 1:
        a, b, c = psd[k - 1], psd[k], psd[k + 1]
        denom = a - 2 * b + c
        if denom < 0:
            f += 0.5 * (a - c) / denom * (freqs[1] - freqs[0])
    return float(np.clip(60.0 * f, 60.0 * lo_hz, 60.0 * hi_hz))


def _refine_peak(x: np.ndarray, i: int) -> float:
    """Sub-sample peak position by a parabola through three samples."""
    a, b, c = x[i - 1], x[i], x[i + 1]
    denom = a - 2 * b + c
    if denom >= 0:
        return float(i)
    return i + 0.5 * (a - c) / denom


def detect_peaks(
    pulse: PulseSignal, hr_hint_bpm: float | None = None
) -> tuple[np.ndarray, RrSeries]:
    _check_duration(pulse)
    x = np.asarray(pulse.samples, dtype=float)
    thr = PEAK_THRESHOLD_STD * x.std()
    mid = x[1:-1]
    cand = np.flatnonzero((mid > x[:-2]) & (mid > x[2:]) & (mid > thr)) + 1
    if len(cand) < 2:
        raise NoPeaks(f"{len(cand)} candidate peak(s)")

    hr = hr_hint_bpm if hr_hint_bpm is not None else estimate_hr(pulse)
    refractory = REFRACTORY_FRACTION * (60.0 / hr) * pulse.fs

    # greedy by height: a peak survives unless a taller one is within the refractory span
    kept: list[int] = []
    for i in cand[np.argsort(-x[cand], kind="stable")]:
        if all(abs(i - j) >= refractory for j in kept):
            kept.append(int(i))
    peaks = np.array(sorted(kept), dtype=int)
    if len(peaks) < 2:
        raise NoPeaks(f"{len(peaks)} peak(s) after refractory filtering")

    times = np.array([_refine_peak(x, i) for i in peaks]) / pulse.fs
    rr = np.diff(times) * 1000.0
    good = (rr >= RR_MIN_MS) & (rr <= RR_MAX_MS)
    if not np.any(good):
        raise NoPeaks("no RR interval inside the physiological range")
    return peaks, RrSeries(rr[good], n_dropped=int((~good).sum()))


def hrv_metrics(rr: RrSeries) -> tuple[float, float, float]:
    """(pnn50 %, rmssd ms, sdnn ms)."""
    x = rr.intervals_ms
    if len(x) < 2:
        raise TooFewIntervals(f"need >= 2 intervals, got {len(x)}")
    d = np.diff(x)
    pnn50 = 100.0 * np.count_nonzero(np.abs(d) > PNN_THRESHOLD_MS) / len(d)
    rmssd = math.sqrt(np.mean(d * d))
    sdnn = float(np.std(x, ddof=1))
    return float(pnn50), rmssd, sdnn


def baevsky_si(rr: RrSeries) -> tuple[float, str]:
    """Baevsky stress index over a 50 ms histogram spanning 0.3-2.0 s.

    Intervals outside the histogram range count toward the nearest edge bin.
    """
    ms = rr.intervals_ms
    if len(ms) < SI_MIN_INTERVALS:
        raise TooFewIntervals(f"need >= {SI_MIN_INTERVALS} intervals, got {len(ms)}")
    n_bins = (SI_HI_MS - SI_LO_MS) // SI_BIN_MS
    idx = np.floor((ms - SI_LO_MS) / SI_BIN_MS + 1e-9).astype(int)
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    modal = int(np.argmax(counts))  # ties -> shortest interval bin
    mo_s = (SI_LO_MS + (modal + 0.5) * SI_BIN_MS) / 1000.0
    amo = 100.0 * counts[modal] / len(ms)
    spread_s = (ms.max() - ms.min()) / 1000.0
    flag = OK
    if spread_s < SI_MIN_RANGE_S:
        spread_s = SI_MIN_RANGE_S
        flag = DEGENERATE_VARIABILITY
    return float(amo / (2.0 * mo_s * spread_s)), flag


def _input_rms(series: CombinedSeries) -> float:
    rgb = series.rgb
    return float(np.sqrt(np.mean((rgb / rgb.mean(axis=0)) ** 2)))


def compute_vitals(series: CombinedSeries, cfg: PosConfig | None = None) -> VitalsReport:
    cfg = cfg or PosConfig()
    if series.duration < MIN_DURATION_S - _DURATION_EPS:
        raise TraceTooShort(f"{series.duration:.2f} s trace, need >= {MIN_DURATION_S} s")
    pulse = pos_pipeline(series, cfg)
    rms = float(np.sqrt(np.mean(pulse.samples ** 2)))
    if rms < 1e-9 * _input_rms(series):
        raise NoPulse("pulse signal is numerically zero")

    hr = estimate_hr(pulse, cfg.band_lo_hz, cfg.band_hi_hz)
    _, rr = detect_peaks(pulse, hr)

    quality = []
    pnn50 = rmssd = sdnn = si = None
    if len(rr) >= 2:
        pnn50, rmssd, sdnn = hrv_metrics(rr)
    if len(rr) >= SI_MIN_INTERVALS:
        si, flag = baevsky_si(rr)
        if flag != OK:
            quality.append(flag)
    else:
        quality.append(LOW_BEAT_COUNT)
    return VitalsReport(hr, rr, pnn50, rmssd, sdnn, si, quality or [OK])
