"""Domain error catalog.

Every computation error raised by the library derives from ``VitalsError``.
The CLI maps these to exit code 1 and the batch service to HTTP 422 (or 400
for ``TraceFormatError``, which means the request body itself is unreadable).
"""


class VitalsError(ValueError):
    """Base class for all domain errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class LineError(VitalsError):
    """Error tied to a 1-based line of an input document."""

    def __init__(self, line: int, detail: str = ""):
        self.line = line
        self.detail = detail
        msg = f"line {line}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


# trace ingest

class TraceFormatError(VitalsError):
    """The trace document cannot be read as a trace at all."""


class MalformedRow(TraceFormatError, LineError):
    pass


class EmptyTrace(TraceFormatError):
    pass


class NonMonotoneTimestamps(LineError):
    def __init__(self, line: int, roi: str):
        self.roi = roi
        super().__init__(line, f"timestamps not strictly increasing for ROI {roi!r}")


class NonPositiveChannel(LineError):
    pass


class RoiSpanMismatch(VitalsError):
    pass


class RoiGridMismatch(VitalsError):
    pass


class AllZeroWeights(VitalsError):
    pass


class TooFewSamples(VitalsError):
    pass


class GapTooLarge(VitalsError):
    pass


# pulse extraction

class NonPositiveSample(VitalsError):
    pass


class DegenerateWindow(VitalsError):
    pass


class TraceTooShort(VitalsError):
    pass


class BandOutOfRange(VitalsError):
    pass


class InvalidConfig(VitalsError):
    pass


# vitals

class SignalTooShort(VitalsError):
    pass


class NoSpectralPeak(VitalsError):
    pass


class NoPeaks(VitalsError):
    pass


class TooFewIntervals(VitalsError):
    pass


class NoPulse(VitalsError):
    pass


# identity

class ZeroVector(VitalsError):
    pass


class DimensionMismatch(VitalsError):
    pass


class EmptyGallery(VitalsError):
    pass


class CorruptLine(LineError):
    pass


class HeaderMismatch(VitalsError):
    pass


# synthetic generators / oracles

class InvalidParameter(VitalsError):
    pass


class FlatSpectrum(VitalsError):
    pass
