"""Readers and writers: IDX datasets, CSV datasets, model checkpoints, suites.

Custom formats are little-endian and versioned; IDX is big-endian as
published.

Checkpoint layout::

    b"ROBOTMDL" | u32 header_len | header JSON (utf-8)
    | per layer: weights f32[out*in] row-major, bias f32[out]

Suite layout::

    b"ROBOTSTE" | u16 version | u8 norm | u8 metric_variant | f64 epsilon
    | u32 count | u32 input_dim | u32 num_classes
    | count records of {u32 seed_index, u16 ground_truth, u16 predicted,
                        f32 fol, f32 zol, f32 gini, f32 x_t[d], f32 x_0[d]}
    | u32 trailer_len | trailer JSON {"origin_names": [...]} | u8 origin[count]
"""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from . import nn
from .errors import (
    CellError,
    CountMismatchError,
    InvariantError,
    LabelRangeError,
    MagicError,
    ParseError,
    TruncatedError,
)
from .suite import METRIC_FOL_L2, METRIC_FOL_LINF, METRIC_NONE, TestSuite

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MODEL_MAGIC = b"ROBOTMDL"
SUITE_MAGIC = b"ROBOTSTE"
SUITE_VERSION = 1
BALL_TOL = 1e-6

_NORM_CODES = {"linf": 0, "l2": 1}
_METRIC_CODES = {METRIC_NONE: 0, METRIC_FOL_L2: 1, METRIC_FOL_LINF: 2}
_SUITE_HEADER = struct.Struct("<HBBdIII")


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


# --------------------------------------------------------------------- IDX


def _parse_idx(path, expected_magic: int, ndim: int) -> np.ndarray:
    raw = _read_bytes(path)
    header_len = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedError(path, header_len, len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise MagicError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if len(raw) < header_len:
        raise TruncatedError(path, header_len, len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) < expected:
        raise TruncatedError(path, expected, len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=int(np.prod(dims)), offset=header_len).reshape(dims)


def load_idx(images_path, labels_path) -> nn.LabeledDataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1]."""
    images = _parse_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _parse_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float32) / np.float32(255.0)
    return nn.LabeledDataset(x, labels.astype(np.int64))


def save_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write uint8 images ``(n, rows, cols)`` and labels ``(n,)`` as IDX."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


# --------------------------------------------------------------------- CSV


def load_csv(path, num_classes: int) -> nn.LabeledDataset:
    """Label-first CSV rows. Values above 1 mean raw 0-255 pixels, which get rescaled."""
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        _locate_bad_cell(path)
        raise
    if arr.size == 0:
        raise ParseError(f"{path}: no rows")
    labels = arr[:, 0]
    if np.any(labels != np.round(labels)) or np.any(labels < 0) or np.any(labels >= num_classes):
        bad = int(np.flatnonzero((labels < 0) | (labels >= num_classes) | (labels != np.round(labels)))[0])
        raise LabelRangeError(f"{path}:{bad + 1}: label {labels[bad]:g} not in [0, {num_classes})")
    x = arr[:, 1:]
    if not np.all(np.isfinite(x)):
        raise CellError(f"{path}: non-finite pixel value")
    if x.max() > 1.0:
        x = x / 255.0
    if x.min() < 0.0 or x.max() > 1.0:
        raise InvariantError(f"{path}: pixel values outside [0, 255]")
    return nn.LabeledDataset(x.astype(np.float32), labels.astype(np.int64))


def _locate_bad_cell(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            for col, cell in enumerate(line.strip().split(",")):
                try:
                    float(cell)
                except ValueError:
                    raise CellError(f"{path}:{lineno}: column {col + 1} is not numeric: {cell!r}") from None


def save_csv(data: nn.LabeledDataset, path, raw_pixels: bool = False):
    x = data.inputs.astype(np.float64)
    if raw_pixels:
        body = np.round(x * 255).astype(np.int64)
        rows = np.column_stack([data.labels, body])
        np.savetxt(path, rows, delimiter=",", fmt="%d")
    else:
        with open(path, "w") as fh:
            for label, row in zip(data.labels, data.inputs):
                fh.write(str(int(label)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


# -------------------------------------------------------------- checkpoint


def _model_header(model: nn.MlpModel) -> bytes:
    header = {
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "layers": [
            {"in": layer.fan_in, "out": layer.fan_out, "activation": layer.activation}
            for layer in model.layers
        ],
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_bytes(model: nn.MlpModel) -> bytes:
    header = _model_header(model)
    parts = [MODEL_MAGIC, struct.pack("<I", len(header)), header]
    for layer in model.layers:
        parts.append(layer.weights.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(model: nn.MlpModel, path):
    Path(path).write_bytes(checkpoint_bytes(model))


def checkpoint_from_bytes(raw: bytes, path="<bytes>") -> nn.MlpModel:
    if raw[:8] != MODEL_MAGIC:
        raise MagicError(f"{path}: not a model checkpoint (magic {raw[:8]!r})")
    if len(raw) < 12:
        raise TruncatedError(path, 12, len(raw))
    (hlen,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + hlen:
        raise TruncatedError(path, 12 + hlen, len(raw))
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
        specs = [(int(s["in"]), int(s["out"]), s["activation"]) for s in header["layers"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: corrupt checkpoint header: {exc}") from None
    expected = 12 + hlen + sum(4 * (i * o + o) for i, o, _ in specs)
    if len(raw) != expected:
        if len(raw) < expected:
            raise TruncatedError(path, expected, len(raw))
        raise ParseError(f"{path}: {len(raw) - expected} trailing bytes after checkpoint payload")
    off = 12 + hlen
    layers = []
    for fan_in, fan_out, act in specs:
        w = np.frombuffer(raw, "<f4", fan_in * fan_out, off).reshape(fan_out, fan_in)
        off += 4 * fan_in * fan_out
        b = np.frombuffer(raw, "<f4", fan_out, off)
        off += 4 * fan_out
        layers.append(nn.DenseLayer(w.astype(np.float32), b.astype(np.float32), act))
    model = nn.MlpModel(tuple(layers))
    if model.input_dim != header.get("input_dim") or model.num_classes != header.get("num_classes"):
        raise ParseError(f"{path}: header dims disagree with layer list")
    return model


def load_checkpoint(path) -> nn.MlpModel:
    return checkpoint_from_bytes(Path(path).read_bytes(), path)


# ------------------------------------------------------------------- suite


def _record_dtype(d: int) -> np.dtype:
    return np.dtype([
        ("seed_index", "<u4"), ("ground_truth", "<u2"), ("predicted", "<u2"),
        ("fol", "<f4"), ("zol", "<f4"), ("gini", "<f4"),
        ("x_t", "<f4", (d,)), ("x_0", "<f4", (d,)),
    ])


def _check_suite(suite: TestSuite, where: str):
    n = len(suite)
    if n == 0:
        return
    for name in ("x_t", "x_0"):
        arr = getattr(suite, name)
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise InvariantError(f"{where}: {name} entries outside [0, 1]")
    diff = suite.x_t.astype(np.float64) - suite.x_0
    dist = np.abs(diff).max(axis=1) if suite.norm == "linf" else np.linalg.norm(diff, axis=1)
    if np.any(dist > suite.epsilon + BALL_TOL):
        worst = int(np.argmax(dist))
        raise InvariantError(
            f"{where}: record {worst} is {dist[worst]:.6g} from its seed, beyond epsilon {suite.epsilon}"
        )


def suite_bytes(suite: TestSuite) -> bytes:
    _check_suite(suite, "suite")
    if len(suite.origin_names) > 256:
        raise ParseError("at most 256 distinct origins per suite")
    n, d = len(suite), suite.input_dim
    head = SUITE_MAGIC + _SUITE_HEADER.pack(
        SUITE_VERSION, _NORM_CODES[suite.norm], _METRIC_CODES[suite.metric_variant],
        float(suite.epsilon), n, d, suite.num_classes,
    )
    rec = np.zeros(n, dtype=_record_dtype(d))
    for name in ("seed_index", "ground_truth", "predicted", "fol", "zol", "gini", "x_t", "x_0"):
        rec[name] = getattr(suite, name)
    trailer = json.dumps({"origin_names": list(suite.origin_names)}, separators=(",", ":")).encode()
    return b"".join([
        head, rec.tobytes(), struct.pack("<I", len(trailer)), trailer,
        suite.origins.astype(np.uint8).tobytes(),
    ])


def save_suite(suite: TestSuite, path):
    Path(path).write_bytes(suite_bytes(suite))


def suite_from_bytes(raw: bytes, path="<bytes>") -> TestSuite:
    if raw[:8] != SUITE_MAGIC:
        raise MagicError(f"{path}: not a suite archive (magic {raw[:8]!r})")
    hsize = 8 + _SUITE_HEADER.size
    if len(raw) < hsize:
        raise TruncatedError(path, hsize, len(raw))
    version, norm_code, metric_code, eps, n, d, classes = _SUITE_HEADER.unpack(raw[8:hsize])
    if version != SUITE_VERSION:
        raise ParseError(f"{path}: unsupported suite version {version}")
    norms = {v: k for k, v in _NORM_CODES.items()}
    metrics = {v: k for k, v in _METRIC_CODES.items()}
    if norm_code not in norms or metric_code not in metrics:
        raise ParseError(f"{path}: unknown norm/metric code {norm_code}/{metric_code}")
    dtype = _record_dtype(d)
    body_end = hsize + n * dtype.itemsize
    if len(raw) < body_end + 4:
        raise TruncatedError(path, body_end + 4, len(raw))
    rec = np.frombuffer(raw, dtype=dtype, count=n, offset=hsize)
    (tlen,) = struct.unpack("<I", raw[body_end : body_end + 4])
    expected = body_end + 4 + tlen + n
    if len(raw) != expected:
        if len(raw) < expected:
            raise TruncatedError(path, expected, len(raw))
        raise ParseError(f"{path}: {len(raw) - expected} trailing bytes after suite payload")
    trailer = json.loads(raw[body_end + 4 : body_end + 4 + tlen].decode("utf-8"))
    origins = np.frombuffer(raw, np.uint8, n, body_end + 4 + tlen).astype(np.int64)
    x_t = rec["x_t"].reshape(n, d)
    suite = TestSuite(
        x_t, rec["x_0"].reshape(n, d), rec["seed_index"], rec["ground_truth"], classes,
        predicted=rec["predicted"], fol=rec["fol"], zol=rec["zol"], gini=rec["gini"],
        norm=norms[norm_code], epsilon=eps, metric_variant=metrics[metric_code],
        origins=origins, origin_names=tuple(trailer["origin_names"]),
    )
    _check_suite(suite, str(path))
    return suite


def load_suite(path) -> TestSuite:
    return suite_from_bytes(Path(path).read_bytes(), path)
