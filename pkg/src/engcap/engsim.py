"""Synthetic cuff-electrode ENG recordings.

Each electrode sees the superposition of CAP trains from point sources,
scaled by the point-source lead field and delayed by axial propagation,
plus a shared EMG-like low-frequency interference, per-electrode artifact
noise and a white Gaussian component common to all electrodes.

Units: positions in metres, times in seconds, voltages in microvolts.
The cuff axis is the z axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

CLASS_NAMES = ("dorsiflexion", "plantarflexion", "pricking")

MIN_SOURCE_DISTANCE_M = 1e-9


@dataclass(frozen=True)
class CuffGeometry:
    """N rings of M contacts; electrodes ordered ring-major.

    Rings are centred on z = 0 and spaced ``ring_spacing_m`` apart; contact
    ``m`` of every ring sits at angle ``2*pi*m/M``.
    """

    n_rings: int = 8
    n_per_ring: int = 7
    ring_spacing_m: float = 1e-3
    ring_radius_m: float = 0.5e-3
    conductivity_s_per_m: float = 1.45
    electrode_positions: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n_rings < 1 or self.n_per_ring < 1:
            raise ValueError("cuff needs at least one ring and one contact per ring")
        if min(self.ring_spacing_m, self.ring_radius_m) <= 0:
            raise ValueError("geometric lengths must be positive")
        if self.conductivity_s_per_m <= 0:
            raise ValueError("conductivity must be positive")
        if self.electrode_positions is None:
            object.__setattr__(self, "electrode_positions", self._ring_major_positions())
        pos = np.asarray(self.electrode_positions, dtype=np.float64)
        if pos.shape != (self.n_channels, 3):
            raise ValueError(f"expected {self.n_channels} electrode positions, got shape {pos.shape}")
        pos.setflags(write=False)
        object.__setattr__(self, "electrode_positions", pos)

    @property
    def n_channels(self) -> int:
        return self.n_rings * self.n_per_ring

    def ring_z(self, ring: int) -> float:
        return (ring - (self.n_rings - 1) / 2.0) * self.ring_spacing_m

    def _ring_major_positions(self):
        pos = np.empty((self.n_channels, 3))
        for r in range(self.n_rings):
            for m in range(self.n_per_ring):
                angle = 2.0 * math.pi * m / self.n_per_ring
                pos[r * self.n_per_ring + m] = (
                    self.ring_radius_m * math.cos(angle),
                    self.ring_radius_m * math.sin(angle),
                    self.ring_z(r),
                )
        return pos

    def channel_index(self, ring: int, contact: int) -> int:
        return ring * self.n_per_ring + contact

    def with_rings(self, n_rings: int) -> "CuffGeometry":
        """Same contact layout with ``n_rings`` rings (positions recomputed)."""
        return replace(self, n_rings=n_rings, electrode_positions=None)

    def __eq__(self, other):
        if not isinstance(other, CuffGeometry):
            return NotImplemented
        return (
            (self.n_rings, self.n_per_ring, self.ring_spacing_m, self.ring_radius_m, self.conductivity_s_per_m)
            == (other.n_rings, other.n_per_ring, other.ring_spacing_m, other.ring_radius_m, other.conductivity_s_per_m)
            and np.array_equal(self.electrode_positions, other.electrode_positions)
        )

    __hash__ = None


@dataclass(frozen=True)
class CapTemplate:
    """Biphasic CAP: first derivative of a Gaussian with sigma = duration/8.

    Positive lobe first, peak magnitude ``amplitude_uv``, zero outside the
    ``duration_s`` support (end values are ~0.2% of the peak).
    """

    duration_s: float = 1.0e-3
    amplitude_uv: float = 20.0
    sample_rate_hz: float = 30_000.0

    def __post_init__(self):
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("template duration and sample rate must be positive")

    @property
    def sigma_s(self) -> float:
        return self.duration_s / 8.0

    def evaluate(self, t):
        """Waveform at times ``t`` relative to the CAP centre."""
        t = np.asarray(t, dtype=np.float64)
        u = t / self.sigma_s
        w = -self.amplitude_uv * u * np.exp(0.5 - 0.5 * u * u)
        return np.where(np.abs(t) <= self.duration_s / 2.0, w, 0.0)

    @property
    def waveform(self) -> np.ndarray:
        half = int(round(self.duration_s * self.sample_rate_hz / 2.0))
        return self.evaluate(np.arange(-half, half + 1) / self.sample_rate_hz)


@dataclass
class NeuralSource:
    position_m: tuple
    event_times_s: np.ndarray
    cap_template_id: str = "default"
    conduction_velocity_m_per_s: float = 50.0
    class_label: str | None = None
    # multiplies the template before the lead field; converts the template
    # amplitude into the source units of the lead-field model
    strength: float = 1.0

    def __post_init__(self):
        self.event_times_s = np.asarray(self.event_times_s, dtype=np.float64)
        if self.conduction_velocity_m_per_s <= 0:
            raise ValueError("conduction velocity must be positive")
        if self.event_times_s.size > 1 and np.any(np.diff(self.event_times_s) <= 0):
            raise ValueError("event times must be strictly increasing")


@dataclass(frozen=True)
class NoiseSpec:
    awgn_std_uv: float = 0.0
    emg_std_uv: float = 0.0
    artifact_std_uv: float = 0.0
    emg_cutoff_hz: float = 500.0

    def __post_init__(self):
        if min(self.awgn_std_uv, self.emg_std_uv, self.artifact_std_uv) < 0:
            raise ValueError("noise standard deviations must be non-negative")


DEFAULT_NOISE = NoiseSpec(awgn_std_uv=2.0, emg_std_uv=5.0, artifact_std_uv=0.3)


@dataclass(frozen=True)
class StimulusProtocol:
    """Metronome-paced stimulation: one on-window centred in every period."""

    bpm: float = 70.0
    n_periods: int = 100
    on_window_s: float = 0.64
    duration_s: float = 180.0

    def __post_init__(self):
        if self.bpm <= 0 or self.on_window_s <= 0:
            raise ValueError("bpm and on-window must be positive")
        if self.period_s <= self.on_window_s:
            raise ValueError("on-windows overlap: 60/bpm must exceed on_window_s")

    @property
    def period_s(self) -> float:
        return 60.0 / self.bpm

    def on_windows(self) -> list[tuple[float, float]]:
        lead = (self.period_s - self.on_window_s) / 2.0
        windows = []
        for k in range(self.n_periods):
            start = k * self.period_s + lead
            end = start + self.on_window_s
            if end > self.duration_s:
                break
            windows.append((start, end))
        return windows


@dataclass
class Recording:
    samples: np.ndarray
    sample_rate_hz: float
    geometry: CuffGeometry
    class_label: str | None = None
    subject_id: str = ""
    ground_truth_caps: list | None = None
    protocol: StimulusProtocol | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.geometry.n_channels:
            raise ValueError(
                f"samples must be {self.geometry.n_channels} x T, got {self.samples.shape}"
            )
        if self.samples.shape[1] == 0:
            raise ValueError("recording has no samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def with_samples(self, samples, geometry=None) -> "Recording":
        return replace(self, samples=samples, geometry=geometry or self.geometry)


def lead_field_gain(sigma, q_electrode, q_source):
    """Point-source lead field ``-1 / (4 pi sigma |q_l - q_k|^2)``."""
    if sigma <= 0:
        raise ValueError("conductivity must be positive")
    d2 = float(np.sum((np.asarray(q_electrode, float) - np.asarray(q_source, float)) ** 2))
    if d2 < MIN_SOURCE_DISTANCE_M**2:
        raise ValueError("electrode and source coincide: lead field is singular")
    return -1.0 / (4.0 * math.pi * sigma * d2)


def propagation_delay(q_electrode, q_source, velocity):
    """Axial (z) distance divided by the conduction velocity."""
    if velocity <= 0:
        raise ValueError("velocity must be positive")
    return abs(float(q_electrode[2]) - float(q_source[2])) / velocity


def gain_matrix(geometry: CuffGeometry, sources) -> np.ndarray:
    return np.array(
        [[lead_field_gain(geometry.conductivity_s_per_m, q, s.position_m) for s in sources]
         for q in geometry.electrode_positions]
    ).reshape(geometry.n_channels, len(sources))


def delay_matrix(geometry: CuffGeometry, sources) -> np.ndarray:
    return np.array(
        [[propagation_delay(q, s.position_m, s.conduction_velocity_m_per_s) for s in sources]
         for q in geometry.electrode_positions]
    ).reshape(geometry.n_channels, len(sources))


def _shared_interference(rng, n_samples, noise: NoiseSpec, sample_rate_hz):
    from .dsp.filters import butterworth_lowpass_biquad, sosfilt

    raw = rng.standard_normal(n_samples)
    if noise.emg_cutoff_hz < sample_rate_hz / 2:
        sos = butterworth_lowpass_biquad(noise.emg_cutoff_hz, sample_rate_hz)
        raw = sosfilt(sos, raw[None, :])[0]
    std = raw.std()
    return raw * (noise.emg_std_uv / std) if std > 0 else raw * 0.0


def synthesize_recording(
    geometry: CuffGeometry,
    sources,
    templates: dict,
    noise: NoiseSpec,
    protocol: StimulusProtocol | None = None,
    sample_rate_hz: float = 30_000.0,
    duration_s: float = 10.0,
    seed: int = 0,
    class_label: str | None = None,
    subject_id: str = "",
) -> Recording:
    """Sample ``y_l(t) = sum_k h_lk s_k(t - tau_lk) + v_l(t) + u(t)``.

    ``v_l`` is a shared low-pass Gaussian interference plus independent
    per-electrode white artifact noise; ``u`` is white noise identical on
    every electrode.  Deterministic for a fixed ``seed``.
    """
    n_samples = int(round(duration_s * sample_rate_hz))
    if n_samples <= 0:
        raise ValueError("duration too short for the sample rate")
    for s in sources:
        if s.cap_template_id not in templates:
            raise KeyError(f"unknown CAP template id {s.cap_template_id!r}")
        if s.event_times_s.size and (s.event_times_s[0] < 0 or s.event_times_s[-1] > duration_s):
            raise ValueError("source event time outside the recording duration")

    n_ch = geometry.n_channels
    y = np.zeros((n_ch, n_samples))
    gt = []
    if sources:
        gains = gain_matrix(geometry, sources)
        delays = delay_matrix(geometry, sources)
        for k, src in enumerate(sources):
            tpl = templates[src.cap_template_id]
            half = tpl.duration_s / 2.0
            scale = (gains[:, k] * src.strength)[:, None]
            tau = delays[:, k][:, None]
            for t_ev in src.event_times_s:
                lo = max(int(math.floor((t_ev + tau.min() - half) * sample_rate_hz)), 0)
                hi = min(int(math.ceil((t_ev + tau.max() + half) * sample_rate_hz)) + 1, n_samples)
                if hi <= lo:
                    continue
                t = np.arange(lo, hi) / sample_rate_hz
                y[:, lo:hi] += scale * tpl.evaluate(t[None, :] - t_ev - tau)
                gt.append((float(t_ev), k))
    gt.sort()

    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n_samples) * noise.awgn_std_uv
    y += u[None, :]
    if noise.emg_std_uv > 0:
        y += _shared_interference(rng, n_samples, noise, sample_rate_hz)[None, :]
    if noise.artifact_std_uv > 0:
        y += rng.standard_normal((n_ch, n_samples)) * noise.artifact_std_uv

    return Recording(
        samples=y,
        sample_rate_hz=sample_rate_hz,
        geometry=geometry,
        class_label=class_label,
        subject_id=subject_id,
        ground_truth_caps=gt,
        protocol=protocol,
    )


@dataclass(frozen=True)
class ClassConfig:
    """Where a class's CAP source sits and what its CAPs look like."""

    axial_m: float
    angle_rad: float
    radial_m: float = 0.15e-3
    template_duration_s: float = 1.0e-3
    peak_uv: float = 20.0
    conduction_velocity_m_per_s: float = 50.0


def default_class_configs() -> dict:
    """Three sources near the cuff centre, separated axially and angularly."""
    return {
        "dorsiflexion": ClassConfig(axial_m=-0.5e-3, angle_rad=0.0, template_duration_s=1.0e-3, peak_uv=20.0),
        "plantarflexion": ClassConfig(
            axial_m=0.0, angle_rad=2.0 * math.pi / 3.0, template_duration_s=1.25e-3, peak_uv=16.0
        ),
        "pricking": ClassConfig(
            axial_m=0.5e-3, angle_rad=4.0 * math.pi / 3.0, template_duration_s=0.8e-3, peak_uv=24.0
        ),
    }


def stimulus_event_times(protocol: StimulusProtocol, rate_hz, min_gap_s, rng, margin_s=2e-3):
    """CAP firing times: a dead-time Poisson train inside every on-window."""
    times = []
    for start, end in protocol.on_windows():
        t = start + margin_s + rng.exponential(1.0 / rate_hz)
        while t < end - margin_s:
            times.append(t)
            t += min_gap_s + rng.exponential(1.0 / rate_hz)
    return np.array(times)


def source_for_class(cfg: ClassConfig, geometry: CuffGeometry, event_times, label, template_id):
    position = (
        cfg.radial_m * math.cos(cfg.angle_rad),
        cfg.radial_m * math.sin(cfg.angle_rad),
        cfg.axial_m,
    )
    # normalise so the nearest electrode peaks at cfg.peak_uv
    nearest = max(abs(lead_field_gain(geometry.conductivity_s_per_m, q, position)) for q in geometry.electrode_positions)
    return NeuralSource(
        position_m=position,
        event_times_s=event_times,
        cap_template_id=template_id,
        conduction_velocity_m_per_s=cfg.conduction_velocity_m_per_s,
        class_label=label,
        strength=1.0 / nearest,
    )


def generate_class_dataset(
    class_configs: dict,
    n_recordings: int,
    geometry: CuffGeometry | None = None,
    noise: NoiseSpec | None = None,
    protocol: StimulusProtocol | None = None,
    sample_rate_hz: float = 30_000.0,
    cap_rate_hz: float = 150.0,
    min_gap_s: float = 5e-3,
    source_scale: float = 1.0,
    seed: int = 0,
    subject_id: str = "synth",
) -> list[Recording]:
    """One recording per (class, repetition), classes assigned round-robin.

    ``source_scale`` multiplies every CAP amplitude; 0 yields recordings with
    labels but no neural content (the chance-level limit).
    """
    if not class_configs:
        raise ValueError("class_configs is empty")
    if len(class_configs) != 3:
        raise ValueError(f"exactly 3 classes required, got {len(class_configs)}")
    geometry = geometry or CuffGeometry()
    noise = noise if noise is not None else DEFAULT_NOISE
    protocol = protocol or StimulusProtocol(n_periods=6, duration_s=6 * 60.0 / 70.0)
    labels = list(class_configs)
    seeds = np.random.SeedSequence(seed).spawn(n_recordings)
    recordings = []
    for i in range(n_recordings):
        label = labels[i % len(labels)]
        cfg = class_configs[label]
        rng = np.random.default_rng(seeds[i])
        events = stimulus_event_times(protocol, cap_rate_hz, min_gap_s, rng)
        tpl = CapTemplate(cfg.template_duration_s, cfg.peak_uv * source_scale, sample_rate_hz)
        src = source_for_class(cfg, geometry, events, label, label)
        rec = synthesize_recording(
            geometry,
            [src],
            {label: tpl},
            noise,
            protocol,
            sample_rate_hz,
            protocol.duration_s,
            seed=int(rng.integers(2**63)),
            class_label=label,
            subject_id=subject_id,
        )
        recordings.append(rec)
    return recordings
