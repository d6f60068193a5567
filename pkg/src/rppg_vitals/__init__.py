"""Remote-PPG vitals from facial ROI colour traces, plus embedding identification."""
from .errors import VitalsError
from .identity import (
    EmbeddingGallery,
    EmbeddingRecord,
    IdentityMatch,
    enroll,
    identify,
    load_gallery,
    normalize_embedding,
    save_gallery,
)
from .pos import PosConfig, PulseSignal, bandpass, pos_pipeline, pos_project_window, temporal_normalize
from .synth import SynthGroundTruth, dense_spectral_peak, synth_rr, synth_trace
from .trace import (
    CombinedSeries,
    RgbSample,
    RgbTrace,
    combine_rois,
    parse_trace,
    prepare_series,
    resample_uniform,
    serialize_trace,
)
from .vitals import (
    RrSeries,
    VitalsReport,
    baevsky_si,
    compute_vitals,
    detect_peaks,
    estimate_hr,
    hrv_metrics,
)

__version__ = "0.1.0"
