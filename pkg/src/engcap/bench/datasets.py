"""Synthetic signature datasets for the experiments."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..dsp.pipeline import PipelineConfig, preprocess_pipeline
from ..engsim import CLASS_NAMES, CuffGeometry, NoiseSpec, StimulusProtocol, default_class_configs, generate_class_dataset

# ten rings give 56 rows after tripolar referencing, the network input height
EXPERIMENT_GEOMETRY = CuffGeometry(n_rings=10, n_per_ring=7)


@dataclass
class SignatureDataset:
    images: np.ndarray
    labels: np.ndarray
    class_names: tuple
    subject_ids: list
    snr_db: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def input_shape(self) -> tuple:
        return (*self.images.shape[1:], 1)


def signatures_to_arrays(signatures, class_names=CLASS_NAMES):
    """Stack signature images into ``(N, L, W)`` float32 plus integer labels."""
    if not signatures:
        raise ValueError("no signatures")
    index = {c: i for i, c in enumerate(class_names)}
    images = np.stack([s.image for s in signatures]).astype(np.float32)
    labels = np.array([index[s.label] for s in signatures], dtype=np.int64)
    return images, labels


def build_signature_dataset(
    n_recordings: int = 6,
    n_periods: int = 2,
    geometry: CuffGeometry = EXPERIMENT_GEOMETRY,
    noise: NoiseSpec | None = None,
    source_scale: float = 1.0,
    cap_rate_hz: float = 150.0,
    events: str = "detect",
    seed: int = 0,
    subject_id: str = "synth",
    pipeline: PipelineConfig | None = None,
) -> SignatureDataset:
    """Synthesize recordings, preprocess them and pool their signatures."""
    bpm = StimulusProtocol().bpm
    protocol = StimulusProtocol(bpm=bpm, n_periods=n_periods, duration_s=n_periods * 60.0 / bpm)
    recs = generate_class_dataset(
        default_class_configs(),
        n_recordings,
        geometry=geometry,
        noise=noise,
        protocol=protocol,
        cap_rate_hz=cap_rate_hz,
        source_scale=source_scale,
        seed=seed,
        subject_id=subject_id,
    )
    config = replace(pipeline or PipelineConfig(), protocol=protocol, events=events)
    signatures, snrs = [], []
    for rec in recs:
        sigs, snr, _ = preprocess_pipeline(rec, config)
        signatures += sigs
        snrs.append(snr)
    images, labels = signatures_to_arrays(signatures)
    return SignatureDataset(images, labels, CLASS_NAMES, [s.subject_id for s in signatures], snrs)
