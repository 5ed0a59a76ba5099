"""Preprocessing of cuff ENG recordings into spatiotemporal CAP signatures."""

from .filters import (
    BandpassSpec,
    BiquadCascade,
    apply_filter,
    design_butterworth_bandpass,
    filter_samples,
    sosfilt,
)
from .pipeline import PipelineConfig, preprocess_pipeline
from .stages import (
    ActivityIntervals,
    CapEvent,
    Signature,
    clip_extremes,
    compute_snr,
    detect_caps,
    estimate_activity_intervals,
    extract_signatures,
    middle_ring_channels,
    middle_ring_signal,
    tripolar_reference,
)
