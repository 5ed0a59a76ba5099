"""Binary interchange formats.

All three share one layout: a 6-byte magic, a little-endian u32 header
length, a UTF-8 JSON header, then a little-endian binary payload.

* ENGR1 (recording): float32 samples, channel-major (L x T).
* ENGS1 (signatures): one record per signature of u8 label index
  (255 = unlabelled), u16 subject index, f64 CAP time in seconds, then the
  L*W float32 image in row-major order.
* ENGM1 (model checkpoint): float32 tensors in layer declaration order,
  as listed in the header.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .dsp.stages import Signature
from .engsim import CuffGeometry, Recording, StimulusProtocol
from .nn.arch import ArchitectureSpec
from .nn.model import ModelState

MAGIC_RECORDING = b"ENGR1\0"
MAGIC_SIGNATURES = b"ENGS1\0"
MAGIC_MODEL = b"ENGM1\0"
UNLABELLED = 255
_RECORD_HEAD = struct.Struct("<BHd")


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _write(path, magic, header: dict, payload: bytes):
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def _read(path, magic):
    data = Path(path).read_bytes()
    if data[: len(magic)] != magic:
        raise FormatError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}", 0)
    pos = len(magic)
    if len(data) < pos + 4:
        raise FormatError("truncated header length", pos)
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if len(data) < pos + n:
        raise FormatError(f"header claims {n} bytes, file has {len(data) - pos}", pos)
    try:
        header = json.loads(data[pos : pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid JSON: {exc}", pos) from None
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object", pos)
    return header, data, pos + n


def _float32(data, offset, count):
    need = 4 * count
    if len(data) - offset < need:
        raise FormatError(f"payload needs {need} bytes, {len(data) - offset} left", offset)
    return np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float32)


def _require(header, keys, offset):
    missing = [k for k in keys if k not in header]
    if missing:
        raise FormatError(f"header lacks {missing}", offset)


# recordings ---------------------------------------------------------------

def _geometry_to_dict(g: CuffGeometry) -> dict:
    return {
        "n_rings": g.n_rings,
        "n_per_ring": g.n_per_ring,
        "ring_spacing_m": g.ring_spacing_m,
        "ring_radius_m": g.ring_radius_m,
        "conductivity_s_per_m": g.conductivity_s_per_m,
        "electrode_positions": g.electrode_positions.tolist(),
    }


def _geometry_from_dict(d) -> CuffGeometry:
    d = dict(d)
    d["electrode_positions"] = np.asarray(d["electrode_positions"], dtype=np.float64)
    return CuffGeometry(**d)


def write_recording(path, rec: Recording):
    header = {
        "format": "ENGR1",
        "n_channels": rec.geometry.n_channels,
        "n_samples": rec.n_samples,
        "sample_rate_hz": rec.sample_rate_hz,
        "geometry": _geometry_to_dict(rec.geometry),
        "class_label": rec.class_label,
        "subject_id": rec.subject_id,
        "ground_truth_caps": None if rec.ground_truth_caps is None else [[float(t), int(k)] for t, k in rec.ground_truth_caps],
        "protocol": None if rec.protocol is None else vars(rec.protocol),
    }
    _write(path, MAGIC_RECORDING, header, np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())


def read_recording(path) -> Recording:
    header, data, pos = _read(path, MAGIC_RECORDING)
    _require(header, ("n_channels", "n_samples", "sample_rate_hz", "geometry"), len(MAGIC_RECORDING) + 4)
    n_ch, n_t = int(header["n_channels"]), int(header["n_samples"])
    samples = _float32(data, pos, n_ch * n_t).reshape(n_ch, n_t)
    if len(data) != pos + 4 * n_ch * n_t:
        raise FormatError("trailing bytes after sample payload", pos + 4 * n_ch * n_t)
    try:
        geometry = _geometry_from_dict(header["geometry"])
        gt = header.get("ground_truth_caps")
        proto = header.get("protocol")
        return Recording(
            samples,
            float(header["sample_rate_hz"]),
            geometry,
            header.get("class_label"),
            header.get("subject_id", ""),
            None if gt is None else [(float(t), int(k)) for t, k in gt],
            None if proto is None else StimulusProtocol(**proto),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"inconsistent header: {exc}", len(MAGIC_RECORDING) + 4) from None


# signatures ---------------------------------------------------------------

def write_signatures(path, signatures, class_names):
    class_names = list(class_names)
    if len(class_names) >= UNLABELLED:
        raise ValueError("too many classes for a u8 label")
    if not signatures:
        raise ValueError("no signatures to write")
    shape = signatures[0].image.shape
    subjects = sorted({s.subject_id for s in signatures})
    if len(subjects) > 0xFFFF:
        raise ValueError("too many subjects for a u16 index")
    sub_index = {s: i for i, s in enumerate(subjects)}
    buf = io.BytesIO()
    for s in signatures:
        if s.image.shape != shape:
            raise ValueError(f"signature shape {s.image.shape} != {shape}")
        label = UNLABELLED if s.label is None else class_names.index(s.label)
        buf.write(_RECORD_HEAD.pack(label, sub_index[s.subject_id], float(s.cap_time_s)))
        buf.write(np.ascontiguousarray(s.image, dtype="<f4").tobytes())
    header = {
        "format": "ENGS1",
        "n_rows": shape[0],
        "width": shape[1],
        "count": len(signatures),
        "class_names": class_names,
        "subjects": subjects,
    }
    _write(path, MAGIC_SIGNATURES, header, buf.getvalue())


def read_signatures(path):
    """Returns ``(signatures, class_names)``."""
    header, data, pos = _read(path, MAGIC_SIGNATURES)
    _require(header, ("n_rows", "width", "count", "class_names", "subjects"), len(MAGIC_SIGNATURES) + 4)
    rows, width, count = int(header["n_rows"]), int(header["width"]), int(header["count"])
    names, subjects = header["class_names"], header["subjects"]
    pixels = rows * width
    out = []
    for _ in range(count):
        if len(data) - pos < _RECORD_HEAD.size:
            raise FormatError("truncated signature record", pos)
        label, subject, t = _RECORD_HEAD.unpack_from(data, pos)
        if label != UNLABELLED and label >= len(names):
            raise FormatError(f"label index {label} out of range", pos)
        if subject >= len(subjects):
            raise FormatError(f"subject index {subject} out of range", pos + 1)
        pos += _RECORD_HEAD.size
        image = _float32(data, pos, pixels).reshape(rows, width)
        pos += 4 * pixels
        out.append(Signature(image, None if label == UNLABELLED else names[label], t, subjects[subject]))
    if pos != len(data):
        raise FormatError("trailing bytes after last record", pos)
    return out, names


# checkpoints --------------------------------------------------------------

def write_model(path, state: ModelState):
    tensors, payload = [], io.BytesIO()
    for i, layer in enumerate(state.weights):
        for name in sorted(layer):
            arr = np.ascontiguousarray(layer[name], dtype="<f4")
            tensors.append([i, name, list(arr.shape)])
            payload.write(arr.tobytes())
    header = {
        "format": "ENGM1",
        "arch": state.arch.to_dict(),
        "n_layers": len(state.weights),
        "norm_stats": state.norm_stats,
        "seed": state.rng_seed,
        "metadata": state.metadata,
        "tensors": tensors,
    }
    _write(path, MAGIC_MODEL, header, payload.getvalue())


def read_model(path) -> ModelState:
    header, data, pos = _read(path, MAGIC_MODEL)
    _require(header, ("arch", "n_layers", "tensors"), len(MAGIC_MODEL) + 4)
    weights = [{} for _ in range(int(header["n_layers"]))]
    for i, name, shape in header["tensors"]:
        count = int(np.prod(shape, dtype=np.int64))
        weights[i][name] = _float32(data, pos, count).reshape(shape)
        pos += 4 * count
    if pos != len(data):
        raise FormatError("trailing bytes after last tensor", pos)
    try:
        arch = ArchitectureSpec.from_dict(header["arch"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad architecture: {exc}", len(MAGIC_MODEL) + 4) from None
    return ModelState(arch, weights, header.get("norm_stats", {}), int(header.get("seed", 0)), header.get("metadata", {}))
