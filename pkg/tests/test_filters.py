import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engcap._backend import compiled_kernels, python_kernels
from engcap.dsp import BandpassSpec, BiquadCascade, design_butterworth_bandpass, filter_samples, sosfilt

from oracles import biquad_difference_equation, butterworth_bandpass_magnitude

FS = 30000.0


@pytest.fixture(scope="module")
def cascade():
    return design_butterworth_bandpass(BandpassSpec(), FS)


def test_three_biquads_of_bandpass_form(cascade):
    assert len(cascade.sections) == 3
    for b0, b1, b2, _, _ in cascade.sections:
        assert b1 == 0.0 and b2 == -b0


def test_magnitude_matches_analytic_butterworth(cascade):
    f = np.geomspace(50, 14000, 400)
    expected = butterworth_bandpass_magnitude(f, 800, 5000, FS, 6)
    assert np.allclose(cascade.magnitude(f, FS), expected, rtol=1e-9, atol=1e-12)


def test_minus_3db_points_and_dc(cascade):
    db = 20 * np.log10(cascade.magnitude([800.0, 5000.0], FS))
    assert np.all(np.abs(db + 10 * np.log10(2)) < 1e-6)
    assert cascade.magnitude([0.0], FS)[0] < 1e-6
    assert abs(cascade.magnitude([np.sqrt(800 * 5000.0)], FS)[0] - 1.0) < 0.05


def test_impulse_response_matches_difference_equation(cascade):
    x = np.zeros(2000)
    x[0] = 1.0
    ours = sosfilt(cascade.sos(), x)
    ref = biquad_difference_equation(cascade.sos(), x)
    assert np.max(np.abs(ours - ref)) <= 1e-9 * np.max(np.abs(ref))


@pytest.mark.parametrize("order,low,high", [(2, 300, 3000), (4, 100, 1000), (8, 500, 7000)])
def test_other_orders_match_analytic(order, low, high):
    c = design_butterworth_bandpass(BandpassSpec(order, low, high), FS)
    f = np.geomspace(20, 14000, 200)
    assert np.allclose(c.magnitude(f, FS), butterworth_bandpass_magnitude(f, low, high, FS, order), rtol=1e-8, atol=1e-12)


def test_invalid_specs_raise():
    with pytest.raises(ValueError):
        BandpassSpec(6, 800, 16000).validate(FS)
    with pytest.raises(ValueError):
        BandpassSpec(5, 800, 5000).validate(FS)
    with pytest.raises(ValueError):
        BandpassSpec(6, 5000, 800).validate(FS)


def test_unstable_section_rejected():
    with pytest.raises(ValueError):
        BiquadCascade(((1.0, 0.0, -1.0, 0.0, 1.0),))


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31 - 1))
def test_filter_linearity(a, b, seed):
    c = design_butterworth_bandpass(BandpassSpec(), FS)
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 3, 500))
    lhs = filter_samples(a * x + b * y, c)
    rhs = a * filter_samples(x, c) + b * filter_samples(y, c)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (np.abs(rhs).max() + 1e-30))


def test_zero_phase_keeps_symmetric_pulse_peak(cascade):
    t = np.arange(3000)
    x = np.exp(-0.5 * ((t - 1500) / 3.0) ** 2)
    y = filter_samples(x[None], cascade, zero_phase=True)[0]
    assert abs(int(np.argmax(np.abs(y))) - 1500) <= 1
    causal = filter_samples(x[None], cascade, zero_phase=False)[0]
    assert int(np.argmax(np.abs(causal))) > 1501


@pytest.mark.skipif(compiled_kernels is None, reason="compiled extension not built")
def test_compiled_and_fallback_sosfilt_agree(cascade):
    x = np.random.default_rng(0).normal(size=(4, 3000))
    a, b = x.copy(), x.copy()
    compiled_kernels.sosfilt_rows(cascade.sos(), a)
    python_kernels.sosfilt_rows(cascade.sos(), b)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
