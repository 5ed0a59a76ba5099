"""Butterworth IIR design (analog prototype + pre-warped bilinear transform)
and biquad cascade filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._backend import kernels

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class BandpassSpec:
    order: int = 6
    low_hz: float = 800.0
    high_hz: float = 5000.0
    zero_phase: bool = True

    def validate(self, sample_rate_hz):
        if self.order < 2 or self.order % 2:
            raise ValueError("bandpass order must be even and >= 2")
        nyquist = sample_rate_hz / 2.0
        if not 0 < self.low_hz < self.high_hz:
            raise ValueError("need 0 < low_hz < high_hz")
        if self.high_hz >= nyquist:
            raise ValueError(f"high cutoff {self.high_hz} Hz is at or above Nyquist ({nyquist} Hz)")


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections, each ``(b0, b1, b2, a1, a2)`` with a0 = 1."""

    sections: tuple

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(tuple(float(c) for c in s) for s in self.sections))
        for s in self.sections:
            poles = np.roots([1.0, s[3], s[4]])
            if np.any(np.abs(poles) >= 1.0 - STABILITY_MARGIN):
                raise ValueError(f"unstable section {s}: poles {poles}")

    def sos(self) -> np.ndarray:
        """Rows laid out as ``(b0, b1, b2, 1, a1, a2)``."""
        return np.array([(b0, b1, b2, 1.0, a1, a2) for b0, b1, b2, a1, a2 in self.sections])

    def frequency_response(self, freqs_hz, sample_rate_hz):
        z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate_hz)
        h = np.ones_like(z1)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1)
        return h

    def magnitude(self, freqs_hz, sample_rate_hz):
        return np.abs(self.frequency_response(freqs_hz, sample_rate_hz))


def _prewarp(f_hz, fs):
    return 2.0 * fs * math.tan(math.pi * f_hz / fs)


def _prototype_poles(n):
    k = np.arange(1, n + 1)
    return np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))


def _pair_poles(poles, tol=1e-10):
    """Group digital poles into conjugate pairs, then leftover reals two by two."""
    complex_up = sorted((p for p in poles if p.imag > tol), key=lambda p: (abs(p), p.real))
    reals = sorted((p.real for p in poles if abs(p.imag) <= tol))
    pairs = [(p, p.conjugate()) for p in complex_up]
    if len(reals) % 2:
        raise ValueError("odd number of real poles cannot fill biquads")
    pairs += [(complex(reals[i]), complex(reals[i + 1])) for i in range(0, len(reals), 2)]
    return pairs


def design_butterworth_bandpass(spec: BandpassSpec, sample_rate_hz: float) -> BiquadCascade:
    """Order-``spec.order`` Butterworth bandpass as ``order/2`` biquads.

    The lowpass prototype of order ``order/2`` is shifted to the band with the
    transformation ``s -> (s^2 + w0^2) / (s * bw)`` using pre-warped edges, so
    the digital -3 dB points land exactly on ``low_hz`` and ``high_hz``.
    """
    spec.validate(sample_rate_hz)
    fs = float(sample_rate_hz)
    n = spec.order // 2
    w1, w2 = _prewarp(spec.low_hz, fs), _prewarp(spec.high_hz, fs)
    bw, w0sq = w2 - w1, w1 * w2

    analog = []
    for p in _prototype_poles(n):
        root = np.sqrt((p * bw) ** 2 - 4.0 * w0sq + 0j)
        analog += [(p * bw + root) / 2.0, (p * bw - root) / 2.0]
    analog = np.array(analog)
    # analog gain bw^n, n zeros at s=0 (-> z=1) and n at infinity (-> z=-1)
    digital = (2 * fs + analog) / (2 * fs - analog)
    gain = (bw**n) * (2 * fs) ** n / np.prod(2 * fs - analog)
    gain = float(np.real(gain))

    sections = []
    for i, (pa, pb) in enumerate(_pair_poles(digital)):
        a1 = float(np.real(-(pa + pb)))
        a2 = float(np.real(pa * pb))
        g = gain if i == 0 else 1.0
        sections.append((g, 0.0, -g, a1, a2))
    return BiquadCascade(tuple(sections))


def butterworth_lowpass_biquad(cutoff_hz: float, sample_rate_hz: float) -> np.ndarray:
    """Second-order Butterworth lowpass as a single sos row."""
    k = math.tan(math.pi * cutoff_hz / sample_rate_hz)
    q = 1.0 / math.sqrt(2.0)
    norm = 1.0 / (1.0 + k / q + k * k)
    b0 = k * k * norm
    return np.array([[b0, 2.0 * b0, b0, 1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm]])


def sosfilt(sos, x) -> np.ndarray:
    """Filter each row of ``x`` (channels x time) through ``sos``; returns a new array."""
    out = np.array(x, dtype=np.float64, order="C", copy=True)
    squeeze = out.ndim == 1
    if squeeze:
        out = out[None, :]
    kernels.sosfilt_rows(np.ascontiguousarray(sos, dtype=np.float64), out)
    return out[0] if squeeze else out


def filter_samples(samples, cascade: BiquadCascade, zero_phase=True) -> np.ndarray:
    sos = cascade.sos()
    y = sosfilt(sos, samples)
    if zero_phase:
        y = sosfilt(sos, y[..., ::-1])[..., ::-1]
        y = np.ascontiguousarray(y)
    return y


def apply_filter(recording, cascade: BiquadCascade, zero_phase: bool = True):
    """Per-channel filtering; zero-phase runs the cascade forward then backward."""
    return recording.with_samples(filter_samples(recording.samples, cascade, zero_phase))
