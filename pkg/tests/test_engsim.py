import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engcap.engsim import (
    CLASS_NAMES,
    CapTemplate,
    CuffGeometry,
    NeuralSource,
    NoiseSpec,
    StimulusProtocol,
    default_class_configs,
    delay_matrix,
    gain_matrix,
    generate_class_dataset,
    lead_field_gain,
    propagation_delay,
    synthesize_recording,
)


def test_geometry_default_is_8_by_7_ring_major():
    g = CuffGeometry()
    assert g.n_channels == 56
    pos = g.electrode_positions
    # first 7 channels share the first ring's z
    assert np.allclose(pos[:7, 2], g.ring_z(0))
    assert np.allclose(pos[7:14, 2], g.ring_z(1))
    assert np.allclose(np.hypot(pos[:, 0], pos[:, 1]), g.ring_radius_m)
    assert math.isclose(g.ring_z(0), -g.ring_z(7))


def test_geometry_rejects_bad_values():
    with pytest.raises(ValueError):
        CuffGeometry(n_rings=0)
    with pytest.raises(ValueError):
        CuffGeometry(conductivity_s_per_m=0.0)


def test_lead_field_matches_point_source_formula():
    sigma = 1.45
    q_e, q_s = (0.5e-3, 0.0, 0.0), (0.0, 0.0, 0.0)
    expected = -1.0 / (4 * math.pi * sigma * (0.5e-3) ** 2)
    assert math.isclose(lead_field_gain(sigma, q_e, q_s), expected, rel_tol=1e-12)


def test_lead_field_coincident_points_raise():
    with pytest.raises(ValueError):
        lead_field_gain(1.0, (0, 0, 0), (0, 0, 0))


def test_propagation_delay_is_axial_distance_over_velocity():
    assert math.isclose(propagation_delay((0.1, 0, 2e-3), (0, 0, 0), 50.0), 4e-5)


@given(st.floats(-3e-3, 3e-3), st.floats(-3e-3, 3e-3))
def test_lead_field_is_negative_and_decays(z1, dz):
    g = CuffGeometry()
    near = abs(lead_field_gain(g.conductivity_s_per_m, (0.5e-3, 0, z1), (0, 0, z1)))
    far = abs(lead_field_gain(g.conductivity_s_per_m, (0.5e-3, 0, z1 + abs(dz) + 1e-6), (0, 0, z1)))
    assert far < near


def test_cap_template_is_biphasic_and_compact():
    tpl = CapTemplate(1e-3, 20.0, 30000.0)
    w = tpl.waveform
    assert math.isclose(np.abs(w).max(), 20.0, rel_tol=1e-2)
    assert np.argmax(w) < np.argmin(w)
    assert tpl.evaluate(np.array([-0.6e-3, 0.6e-3])).tolist() == [0.0, 0.0]


def _one_source_recording(noise=NoiseSpec(), seed=0, times=(0.01, 0.03)):
    g = CuffGeometry()
    src = NeuralSource((0.1e-3, 0.0, 0.0), np.array(times), "a", 50.0, "dorsiflexion")
    return synthesize_recording(g, [src], {"a": CapTemplate()}, noise, duration_s=0.05, seed=seed)


def test_synthesis_without_noise_is_gain_times_template():
    rec = _one_source_recording()
    g = rec.geometry
    src = NeuralSource((0.1e-3, 0.0, 0.0), np.array([0.01]), "a", 50.0)
    h = gain_matrix(g, [src])[:, 0]
    tau = delay_matrix(g, [src])[:, 0]
    t = np.arange(rec.n_samples) / rec.sample_rate_hz
    tpl = CapTemplate()
    expected = h[:, None] * (tpl.evaluate(t[None] - 0.01 - tau[:, None]) + tpl.evaluate(t[None] - 0.03 - tau[:, None]))
    assert np.allclose(rec.samples, expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())
    assert [t for t, _ in rec.ground_truth_caps] == [0.01, 0.03]


def test_synthesis_is_deterministic_per_seed():
    a = _one_source_recording(NoiseSpec(1.0, 2.0, 0.5), seed=3)
    b = _one_source_recording(NoiseSpec(1.0, 2.0, 0.5), seed=3)
    c = _one_source_recording(NoiseSpec(1.0, 2.0, 0.5), seed=4)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_awgn_and_emg_are_common_mode():
    clean = _one_source_recording()
    noisy = _one_source_recording(NoiseSpec(3.0, 4.0, 0.0), seed=1)
    diff = noisy.samples - clean.samples
    assert np.allclose(diff, diff[0][None, :], atol=1e-12)
    assert 3.0 < diff[0].std() < 7.0


def test_event_outside_duration_rejected():
    g = CuffGeometry()
    src = NeuralSource((0.1e-3, 0, 0), np.array([0.2]), "a")
    with pytest.raises(ValueError):
        synthesize_recording(g, [src], {"a": CapTemplate()}, NoiseSpec(), duration_s=0.1)


def test_stimulus_windows_are_centred_in_periods():
    p = StimulusProtocol(bpm=60, n_periods=3, on_window_s=0.5, duration_s=3.0)
    assert p.on_windows() == [(0.25, 0.75), (1.25, 1.75), (2.25, 2.75)]
    with pytest.raises(ValueError):
        StimulusProtocol(bpm=120, on_window_s=0.6)


def test_class_dataset_round_robin_and_labels():
    recs = generate_class_dataset(default_class_configs(), 4, seed=2,
                                  protocol=StimulusProtocol(n_periods=1, duration_s=60 / 70))
    assert [r.class_label for r in recs] == [*CLASS_NAMES, CLASS_NAMES[0]]
    assert all(len(r.ground_truth_caps) > 10 for r in recs)
    with pytest.raises(ValueError):
        generate_class_dataset({}, 3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0))
def test_synthesis_is_linear_in_source_strength(scale):
    g = CuffGeometry(n_rings=3, n_per_ring=3)
    tpl = {"a": CapTemplate()}
    base = NeuralSource((0.1e-3, 0, 0), np.array([0.005]), "a")
    scaled = NeuralSource((0.1e-3, 0, 0), np.array([0.005]), "a", strength=scale)
    a = synthesize_recording(g, [base], tpl, NoiseSpec(), duration_s=0.01)
    b = synthesize_recording(g, [scaled], tpl, NoiseSpec(), duration_s=0.01)
    assert np.allclose(b.samples, scale * a.samples, rtol=1e-12, atol=1e-9)
