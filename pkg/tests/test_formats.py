import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engcap.dsp import Signature
from engcap.engsim import CuffGeometry, Recording, StimulusProtocol
from engcap.formats import (
    FormatError,
    read_model,
    read_recording,
    read_signatures,
    write_model,
    write_recording,
    write_signatures,
)
from engcap.nn import Network, build_mobilescape


def _recording(seed=0):
    g = CuffGeometry(n_rings=3, n_per_ring=2)
    x = np.random.default_rng(seed).normal(size=(6, 50)).astype(np.float32)
    return Recording(x, 30000.0, g, "pricking", "s1", [(0.001, 0), (0.0012, 0)], StimulusProtocol(bpm=60, n_periods=1, duration_s=1.0))


def test_recording_round_trip(tmp_path):
    rec = _recording()
    write_recording(tmp_path / "a.engr", rec)
    back = read_recording(tmp_path / "a.engr")
    assert np.array_equal(back.samples, rec.samples)
    assert back.samples.dtype == np.float32
    assert back.geometry == rec.geometry
    assert (back.class_label, back.subject_id, back.ground_truth_caps, back.protocol) == (
        rec.class_label, rec.subject_id, rec.ground_truth_caps, rec.protocol)
    write_recording(tmp_path / "b.engr", back)
    assert (tmp_path / "a.engr").read_bytes() == (tmp_path / "b.engr").read_bytes()


def test_recording_layout(tmp_path):
    write_recording(tmp_path / "a.engr", _recording())
    data = (tmp_path / "a.engr").read_bytes()
    assert data[:6] == b"ENGR1\0"
    (n,) = struct.unpack_from("<I", data, 6)
    assert len(data) == 10 + n + 4 * 6 * 50


def test_bad_magic_reports_offset_zero(tmp_path):
    (tmp_path / "x.engr").write_bytes(b"NOPE00" + b"\0" * 20)
    with pytest.raises(FormatError) as exc:
        read_recording(tmp_path / "x.engr")
    assert exc.value.offset == 0


def test_truncated_payload_reports_offset(tmp_path):
    write_recording(tmp_path / "a.engr", _recording())
    data = (tmp_path / "a.engr").read_bytes()
    (tmp_path / "t.engr").write_bytes(data[:-7])
    with pytest.raises(FormatError) as exc:
        read_recording(tmp_path / "t.engr")
    (n,) = struct.unpack_from("<I", data, 6)
    assert exc.value.offset == 10 + n


def test_bad_header_json(tmp_path):
    (tmp_path / "h.engr").write_bytes(b"ENGR1\0" + struct.pack("<I", 3) + b"{x}")
    with pytest.raises(FormatError) as exc:
        read_recording(tmp_path / "h.engr")
    assert exc.value.offset == 10
    (tmp_path / "h2.engr").write_bytes(b"ENGR1\0" + struct.pack("<I", 300) + b"{}")
    with pytest.raises(FormatError):
        read_recording(tmp_path / "h2.engr")


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_signature_round_trip(tmp_path_factory, n, seed):
    rng = np.random.default_rng(seed)
    names = ["dorsiflexion", "plantarflexion", "pricking"]
    sigs = [Signature(rng.normal(size=(4, 6)).astype(np.float32), [*names, None][rng.integers(4)],
                      float(rng.random()), f"s{rng.integers(3)}") for _ in range(n)]
    path = tmp_path_factory.mktemp("s") / "a.engs"
    write_signatures(path, sigs, names)
    back, back_names = read_signatures(path)
    assert back_names == names
    for a, b in zip(sigs, back):
        assert np.array_equal(a.image, b.image)
        assert (a.label, a.cap_time_s, a.subject_id) == (b.label, b.cap_time_s, b.subject_id)


def test_signature_trailing_bytes(tmp_path):
    sigs = [Signature(np.zeros((2, 3), np.float32), "pricking", 0.5, "a")]
    write_signatures(tmp_path / "a.engs", sigs, ["pricking"])
    with open(tmp_path / "a.engs", "ab") as fh:
        fh.write(b"\1")
    with pytest.raises(FormatError, match="trailing"):
        read_signatures(tmp_path / "a.engs")


def test_model_round_trip(tmp_path):
    net = Network(build_mobilescape((8, 10, 1), kernels=(3, 3), filters=(2, 4)), seed=3)
    state = net.state(norm_stats={"min": -1.5, "max": 2.0, "degenerate": False}, metadata={"best_epoch": 4})
    write_model(tmp_path / "m.engm", state)
    back = read_model(tmp_path / "m.engm")
    assert back.arch == state.arch
    assert back.norm_stats == state.norm_stats and back.metadata == state.metadata and back.rng_seed == 3
    for a, b in zip(state.weights, back.weights):
        assert a.keys() == b.keys()
        assert all(np.array_equal(a[k], b[k]) for k in a)
    back.validate()
    x = np.random.default_rng(0).random((2, 8, 10, 1)).astype(np.float32)
    assert np.array_equal(Network.from_state(back).forward(x), net.forward(x))
