"""Preprocessing stages that turn a raw cuff recording into CAP signatures."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from ..engsim import Recording, StimulusProtocol

log = logging.getLogger(__name__)

MAD_TO_STD = 0.6745


@dataclass
class ActivityIntervals:
    on_intervals: list
    off_intervals: list
    # set when no stimulation peak cleared the floor
    flagged: bool = False

    @property
    def on_time_s(self) -> float:
        return sum(e - s for s, e in self.on_intervals)

    @property
    def off_time_s(self) -> float:
        return sum(e - s for s, e in self.off_intervals)

    def mask(self, n_samples, sample_rate_hz, which="on") -> np.ndarray:
        m = np.zeros(n_samples, dtype=bool)
        for start, end in self.on_intervals if which == "on" else self.off_intervals:
            m[int(round(start * sample_rate_hz)):int(round(end * sample_rate_hz))] = True
        return m


@dataclass(frozen=True)
class CapEvent:
    time_s: float
    peak_uv: float
    channel_context: str = ""


@dataclass
class Signature:
    image: np.ndarray
    label: str | None
    cap_time_s: float
    subject_id: str = ""


def clip_extremes(recording: Recording, limit_uv: float = 40.0) -> Recording:
    if limit_uv <= 0:
        raise ValueError("clip limit must be positive")
    return recording.with_samples(np.clip(recording.samples, -limit_uv, limit_uv))


def tripolar_reference(recording: Recording) -> Recording:
    """Subtract the mean of the two outer rings (same contact) from every inner ring.

    The outer rings are consumed as references, so an N-ring cuff becomes an
    (N-2)-ring one.
    """
    geo = recording.geometry
    if geo.n_rings < 3:
        raise ValueError(f"tripolar referencing needs >= 3 rings, cuff has {geo.n_rings}")
    x = recording.samples.reshape(geo.n_rings, geo.n_per_ring, -1)
    reference = 0.5 * (x[0] + x[-1])
    out = (x[1:-1] - reference[None]).reshape(-1, recording.n_samples)
    inner = geo.with_rings(geo.n_rings - 2)
    # keep the physical z positions of the inner rings
    pos = geo.electrode_positions.reshape(geo.n_rings, geo.n_per_ring, 3)[1:-1].reshape(-1, 3)
    inner = type(geo)(
        n_rings=inner.n_rings,
        n_per_ring=geo.n_per_ring,
        ring_spacing_m=geo.ring_spacing_m,
        ring_radius_m=geo.ring_radius_m,
        conductivity_s_per_m=geo.conductivity_s_per_m,
        electrode_positions=pos,
    )
    return recording.with_samples(out, geometry=inner)


def middle_ring_channels(geometry) -> list[int]:
    """Channels of the central ring (both central rings when N is even)."""
    n = geometry.n_rings
    rings = sorted({(n - 1) // 2, n // 2})
    return [geometry.channel_index(r, m) for r in rings for m in range(geometry.n_per_ring)]


def middle_ring_signal(recording: Recording) -> np.ndarray:
    return recording.samples[middle_ring_channels(recording.geometry)].mean(axis=0)


def moving_average(x, window: int, zero_pad: bool = False) -> np.ndarray:
    """Centred boxcar mean.

    At the edges the window shrinks, or with ``zero_pad`` the samples
    beyond the signal count as zeros.
    """
    window = max(int(window), 1)
    c = np.concatenate(([0.0], np.cumsum(x, dtype=np.float64)))
    n = len(x)
    half = window // 2
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) - half + window, 0, n)
    return (c[hi] - c[lo]) / (window if zero_pad else hi - lo)


def _merge(intervals):
    merged = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


def _complement(intervals, duration):
    out, t = [], 0.0
    for s, e in intervals:
        if s > t:
            out.append((t, s))
        t = max(t, e)
    if t < duration:
        out.append((t, duration))
    return out


def estimate_activity_intervals(
    recording: Recording,
    protocol_hint: StimulusProtocol | None = None,
    window_s: float = 0.2,
    floor_ratio: float = 1.1,
    separation_tolerance: float = 0.25,
    guard_s: float = 0.05,
) -> ActivityIntervals:
    """Locate stimulation windows from the smoothed rectified middle-ring signal.

    The rectified signal is averaged over ``window_s`` and then once more over
    the stimulation window length, which turns each burst plateau into a
    peak at the burst centre.  Peaks at least one stimulus period apart
    (minus ``separation_tolerance`` for tempo jitter) and above
    ``floor_ratio`` times the envelope's 10th percentile mark the window centres.
    Off-intervals exclude ``guard_s`` on either side of every on-interval so
    that a slightly misplaced window edge does not leak bursts into them.
    """
    protocol_hint = protocol_hint or StimulusProtocol()
    fs = recording.sample_rate_hz
    duration = recording.duration_s
    if duration <= protocol_hint.period_s:
        raise ValueError("recording shorter than one stimulus period")
    rect = np.abs(recording.samples[middle_ring_channels(recording.geometry)]).mean(axis=0)
    envelope = moving_average(rect, int(round(window_s * fs)))
    # zero padding: a window hanging off the recording cannot be fully active
    score = moving_average(envelope, int(round(protocol_hint.on_window_s * fs)), zero_pad=True)
    # taken from the envelope, whose edges are not attenuated by zero padding
    floor = floor_ratio * np.percentile(envelope, 10)
    distance = max(int(protocol_hint.period_s * (1.0 - separation_tolerance) * fs), 1)
    peaks, _ = find_peaks(score, height=floor, distance=distance)
    if len(peaks) == 0 or floor <= 0:
        log.warning("no stimulation peaks above the activity floor")
        return ActivityIntervals([], [(0.0, duration)], flagged=True)
    half = protocol_hint.on_window_s / 2.0
    on = _merge([(max(p / fs - half, 0.0), min(p / fs + half, duration)) for p in peaks])
    guarded = _merge([(max(s - guard_s, 0.0), min(e + guard_s, duration)) for s, e in on])
    return ActivityIntervals(on, _complement(guarded, duration))


def compute_snr(recording: Recording, intervals: ActivityIntervals) -> float:
    """Channel-averaged ratio of mean on-window power to mean off-window power, in dB."""
    if not intervals.on_intervals or not intervals.off_intervals:
        raise ValueError("SNR needs both stimulus-on and stimulus-off intervals")
    fs = recording.sample_rate_hz
    on = intervals.mask(recording.n_samples, fs, "on")
    off = intervals.mask(recording.n_samples, fs, "off") & ~on
    if not on.any() or not off.any():
        raise ValueError("on/off intervals contain no samples")
    x = recording.samples
    p_on = np.mean(x[:, on] ** 2, axis=1)
    p_off = np.mean(x[:, off] ** 2, axis=1)
    if np.any(p_off <= 0):
        raise ValueError("zero stimulus-off power on at least one channel")
    return float(10.0 * np.log10(np.mean(p_on / p_off)))


def candidate_peaks(signal, mask, lower, upper) -> np.ndarray:
    """Indices of local maxima of |signal| inside ``mask`` with lower <= |x| <= upper."""
    a = np.abs(signal)
    is_max = np.zeros(a.shape, dtype=bool)
    is_max[1:-1] = (a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:])
    is_max &= mask & (a >= lower) & (a <= upper)
    return np.flatnonzero(is_max)


def apply_exclusion(indices, min_gap_samples, magnitude=None, align_samples=0) -> list[int]:
    """Accept peaks in time order; drop any within the gap after an accepted one.

    With ``align_samples > 0`` an accepted peak is moved to the largest
    candidate (by ``magnitude``) starting within ``align_samples`` of it, so
    filter ringing ahead of a CAP does not steal the event.  The gap is
    measured from the moved position.
    """
    indices = np.asarray(indices)
    accepted = []
    last = -math.inf
    k = 0
    while k < len(indices):
        i = indices[k]
        if i - last < min_gap_samples:
            k += 1
            continue
        if align_samples > 0 and magnitude is not None:
            stop = np.searchsorted(indices, i + align_samples, side="left")
            group = indices[k:stop]
            i = group[np.argmax(magnitude[group])]
        accepted.append(int(i))
        last = i
        k += 1
    return accepted


def detect_caps(
    recording: Recording,
    intervals: ActivityIntervals,
    k_lower: float = 3.5,
    k_upper: float = 10.0,
    exclusion_ms: float = 3.0,
    align_ms: float = 2.0,
) -> list[CapEvent]:
    """Threshold-window peak detection on the middle-ring average.

    Lower bound ``k_lower * median(|x|) / 0.6745`` (robust noise level),
    upper bound ``k_upper * std(x)`` to reject artifacts.  ``align_ms = 0``
    gives the plain first-come time-order scan.
    """
    if not intervals.on_intervals:
        return []
    fs = recording.sample_rate_hz
    x = middle_ring_signal(recording)
    noise = np.median(np.abs(x)) / MAD_TO_STD
    lower, upper = k_lower * noise, k_upper * np.std(x)
    if noise <= 0 or lower > upper:
        return []
    mask = intervals.mask(recording.n_samples, fs, "on")
    idx = candidate_peaks(x, mask, lower, upper)
    gap = int(math.ceil(exclusion_ms * 1e-3 * fs - 1e-9))
    ctx = "rings " + "-".join(str(r) for r in sorted({(recording.geometry.n_rings - 1) // 2, recording.geometry.n_rings // 2}))
    align = int(round(align_ms * 1e-3 * fs))
    return [CapEvent(i / fs, float(x[i]), ctx) for i in apply_exclusion(idx, gap, np.abs(x), align)]


def window_bounds(center: int, width: int) -> tuple[int, int]:
    """Half-open ``[start, stop)`` sample range of a width-``width`` window."""
    start = center - width // 2
    return start, start + width


def extract_signatures(recording: Recording, events, width_samples: int = 100) -> list[Signature]:
    if width_samples > recording.n_samples:
        raise ValueError(f"signature width {width_samples} exceeds recording length {recording.n_samples}")
    out = []
    for ev in events:
        center = int(round(ev.time_s * recording.sample_rate_hz))
        start, stop = window_bounds(center, width_samples)
        if start < 0 or stop > recording.n_samples:
            continue
        image = np.ascontiguousarray(recording.samples[:, start:stop], dtype=np.float32)
        out.append(Signature(image, recording.class_label, ev.time_s, recording.subject_id))
    return out


@dataclass
class PipelineDiagnostics:
    counts: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    snr_stage: str = ""
    activity_flagged: bool = False
    # every event before boundary dropping; kept out of as_dict to keep reports small
    event_times_s: list = field(default_factory=list)

    def as_dict(self):
        return {
            "counts": dict(self.counts),
            "stages": list(self.stages),
            "snr_stage": self.snr_stage,
            "activity_flagged": self.activity_flagged,
        }
