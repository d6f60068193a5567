"""Per-ROI mean RGB traces: parsing, serialization, resampling, ROI fusion.

A trace document is long-form CSV with header ``t,roi,r,g,b`` and one row per
(frame, ROI). Lines starting with ``#`` and blank lines are ignored. Line
numbers in errors are 1-based physical lines of the document.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    AllZeroWeights,
    EmptyTrace,
    GapTooLarge,
    MalformedRow,
    NonMonotoneTimestamps,
    NonPositiveChannel,
    NonPositiveSample,
    RoiGridMismatch,
    RoiSpanMismatch,
    TooFewSamples,
)

HEADER = ("t", "roi", "r", "g", "b")
DEFAULT_GAP_LIMIT = 0.5
STANDARD_ROIS = ("left_cheek", "right_cheek", "nose", "forehead")

# relative tolerance used to decide whether two streams share one time grid
_GRID_RTOL = 1e-9


@dataclass(frozen=True)
class RgbSample:
    t: float
    roi: str
    r: float
    g: float
    b: float


@dataclass(frozen=True, eq=False)
class RoiStream:
    """Time-ordered samples of a single ROI, stored column-wise."""

    roi: str
    t: np.ndarray
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def fs_estimate(self) -> float | None:
        if len(self.t) < 2:
            return None
        return (len(self.t) - 1) / (self.t[-1] - self.t[0])

    def allclose(self, other: RoiStream, t_atol: float = 1e-9, rtol: float = 1e-9) -> bool:
        if self.roi != other.roi or len(self) != len(other):
            return False
        return bool(
            np.allclose(self.t, other.t, rtol=0, atol=t_atol)
            and all(
                np.allclose(getattr(self, c), getattr(other, c), rtol=rtol, atol=0)
                for c in "rgb"
            )
        )


@dataclass(frozen=True, eq=False)
class RgbTrace:
    """Per-ROI RGB streams. ``fs`` is exact after resampling, estimated otherwise."""

    streams: dict[str, RoiStream]
    fs: float | None = None

    @property
    def roi_set(self) -> set[str]:
        return set(self.streams)

    @property
    def samples(self) -> list[RgbSample]:
        return list(self.iter_samples())

    def iter_samples(self) -> Iterator[RgbSample]:
        order = {roi: i for i, roi in enumerate(self.streams)}
        rows = []
        for s in self.streams.values():
            for i in range(len(s)):
                rows.append((s.t[i], order[s.roi], s.roi, s.r[i], s.g[i], s.b[i]))
        rows.sort(key=lambda row: (row[0], row[1]))
        for t, _, roi, r, g, b in rows:
            yield RgbSample(float(t), roi, float(r), float(g), float(b))

    def allclose(self, other: RgbTrace, t_atol: float = 1e-9, rtol: float = 1e-9) -> bool:
        if self.roi_set != other.roi_set:
            return False
        if (self.fs is None) != (other.fs is None):
            return False
        if self.fs is not None and not math.isclose(self.fs, other.fs, rel_tol=rtol):
            return False
        return all(self.streams[k].allclose(other.streams[k], t_atol, rtol) for k in self.streams)


@dataclass(frozen=True, eq=False)
class CombinedSeries:
    """Single ROI-fused RGB series on a uniform grid ``t0 + k/fs``."""

    t0: float
    fs: float
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n = len(self.r)
        if len(self.g) != n or len(self.b) != n:
            raise ValueError("channel arrays differ in length")
        if n < 2:
            raise TooFewSamples(f"combined series needs >= 2 samples, got {n}")
        if not (self.fs > 0):
            raise ValueError("fs must be positive")
        for c in (self.r, self.g, self.b):
            if not np.all(c > 0):
                raise NonPositiveSample("combined series has non-positive values")

    def __len__(self) -> int:
        return len(self.r)

    @property
    def duration(self) -> float:
        return len(self.r) / self.fs

    @property
    def rgb(self) -> np.ndarray:
        """(N, 3) array."""
        return np.column_stack([self.r, self.g, self.b])

    def scaled(self, c: float) -> CombinedSeries:
        return CombinedSeries(self.t0, self.fs, self.r * c, self.g * c, self.b * c)


def _float(field: str, lineno: int, what: str) -> float:
    try:
        x = float(field)
    except ValueError:
        raise MalformedRow(lineno, f"{what} is not a number: {field!r}") from None
    if not math.isfinite(x):
        raise MalformedRow(lineno, f"{what} is not finite")
    return x


def parse_trace(document: str) -> RgbTrace:
    """Parse a trace CSV document into per-ROI streams.

    Timestamps must already be strictly increasing per ROI in file order;
    rows of different ROIs may interleave freely.
    """
    header_seen = False
    cols: dict[str, list[list[float]]] = {}
    last_line: dict[str, int] = {}

    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if not header_seen:
            if tuple(fields) != HEADER:
                raise MalformedRow(lineno, f"expected header {','.join(HEADER)!r}")
            header_seen = True
            continue
        if len(fields) != 5:
            raise MalformedRow(lineno, f"expected 5 fields, got {len(fields)}")
        t = _float(fields[0], lineno, "t")
        roi = fields[1]
        if not roi:
            raise MalformedRow(lineno, "empty ROI label")
        if t < 0:
            raise MalformedRow(lineno, "negative timestamp")
        rgb = [_float(f, lineno, c) for f, c in zip(fields[2:], "rgb")]
        if min(rgb) <= 0:
            raise NonPositiveChannel(lineno, "channel values must be > 0")
        stream = cols.setdefault(roi, [[], [], [], []])
        if stream[0] and t <= stream[0][-1]:
            raise NonMonotoneTimestamps(lineno, roi)
        stream[0].append(t)
        for dst, v in zip(stream[1:], rgb):
            dst.append(v)
        last_line[roi] = lineno

    if not header_seen and not cols:
        raise EmptyTrace("document has no header and no rows")
    if not cols:
        raise EmptyTrace("document has no data rows")

    streams = {
        roi: RoiStream(roi, *(np.asarray(c, dtype=float) for c in data))
        for roi, data in cols.items()
    }
    estimates = [s.fs_estimate for s in streams.values()]
    fs = None
    if all(e is not None for e in estimates):
        fs = float(np.mean(estimates))

    if len(streams) > 1 and fs is not None:
        period = max(1.0 / e for e in estimates)
        starts = [s.t[0] for s in streams.values()]
        ends = [s.t[-1] for s in streams.values()]
        if max(starts) - min(starts) > period or max(ends) - min(ends) > period:
            raise RoiSpanMismatch("ROI streams do not cover the same time span")

    return RgbTrace(streams, fs)


def serialize_trace(trace: RgbTrace, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for s in trace.iter_samples():
        w.writerow([repr(s.t), s.roi, repr(s.r), repr(s.g), repr(s.b)])
    return buf.getvalue()


def resample_uniform(
    trace: RgbTrace, fs_target: float, gap_limit: float = DEFAULT_GAP_LIMIT
) -> RgbTrace:
    """Linearly interpolate every ROI stream onto one shared grid ``t0 + k/fs_target``.

    The grid spans the time range covered by all streams. Gaps wider than
    ``gap_limit`` seconds are rejected instead of interpolated.
    """
    if not (fs_target > 0) or not math.isfinite(fs_target):
        raise ValueError(f"fs_target must be positive, got {fs_target}")
    for s in trace.streams.values():
        if len(s) < 2:
            raise TooFewSamples(f"ROI {s.roi!r} has {len(s)} sample(s)")
        gaps = np.diff(s.t)
        if gaps.max() > gap_limit:
            i = int(np.argmax(gaps))
            raise GapTooLarge(
                f"ROI {s.roi!r}: {gaps[i]:.3f} s gap after t={s.t[i]:.3f} (limit {gap_limit} s)"
            )

    t0 = max(s.t[0] for s in trace.streams.values())
    t1 = min(s.t[-1] for s in trace.streams.values())
    n = math.floor((t1 - t0) * fs_target + 1e-6) + 1
    if n < 2:
        raise TooFewSamples("shared time span shorter than one target sample period")
    grid = t0 + np.arange(n) / fs_target

    out = {}
    for roi, s in trace.streams.items():
        out[roi] = RoiStream(
            roi,
            grid.copy(),
            np.interp(grid, s.t, s.r),
            np.interp(grid, s.t, s.g),
            np.interp(grid, s.t, s.b),
        )
    return RgbTrace(out, float(fs_target))


def _shared_grid(trace: RgbTrace) -> np.ndarray:
    streams = list(trace.streams.values())
    if trace.fs is None:
        raise RoiGridMismatch("trace has no uniform sampling rate; resample it first")
    ref = streams[0].t
    tol = _GRID_RTOL * max(1.0, float(np.abs(ref).max()))
    for s in streams[1:]:
        if len(s.t) != len(ref) or np.abs(s.t - ref).max() > tol:
            raise RoiGridMismatch(f"ROI {s.roi!r} is not on the grid of ROI {streams[0].roi!r}")
    return ref


def combine_rois(trace: RgbTrace, weights: Mapping[str, float] | None = None) -> CombinedSeries:
    """Weighted per-timestamp mean of each channel across ROIs.

    ROIs missing from ``weights`` get weight 0; weights are renormalized to
    sum to 1. ``None`` means uniform weighting.
    """
    grid = _shared_grid(trace)
    rois = list(trace.streams)
    if weights is None:
        w = np.ones(len(rois))
    else:
        w = np.array([float(weights.get(roi, 0.0)) for roi in rois])
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("ROI weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise AllZeroWeights(f"weights for ROIs {rois} sum to zero")
    w = w / total

    def fuse(channel: str) -> np.ndarray:
        acc = np.zeros(len(grid))
        for wi, roi in zip(w, rois):
            if wi == 1.0:
                return getattr(trace.streams[roi], channel).copy()
            if wi > 0:
                acc += wi * getattr(trace.streams[roi], channel)
        return acc

    return CombinedSeries(float(grid[0]), float(trace.fs), fuse("r"), fuse("g"), fuse("b"))


def prepare_series(
    trace: RgbTrace,
    fs_target: float | None = None,
    weights: Mapping[str, float] | None = None,
    gap_limit: float = DEFAULT_GAP_LIMIT,
) -> CombinedSeries:
    """Resample (at the estimated frame rate unless given) and fuse ROIs."""
    if fs_target is None:
        if trace.fs is None:
            raise TooFewSamples("cannot estimate sampling rate from single-sample ROI streams")
        fs_target = round(trace.fs, 6)
    return combine_rois(resample_uniform(trace, fs_target, gap_limit), weights)
