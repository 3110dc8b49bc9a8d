"""Model persistence (.ttkm files).

Layout::

    magic "TTKM" | u32 version | u32 header_len | header JSON | binary blob

The header is human-readable JSON carrying the kernel settings, dims,
rank chain, class ids, grid metadata, and a CRC-32 of the blob; the blob
carries the exact float64 payload (little-endian): the support vectors'
shared trailing cores stored once, one first core per support vector,
the coefficient array (alpha_i * y_i), and the bias.  Keeping floats out
of the header preserves bit-identical predictions across a round trip;
keeping structure out of the blob keeps diffs reviewable.

A file holds either one binary model (``kind: "binary"``) or a
one-vs-one ensemble (``kind: "ovo"``) whose per-pair blobs are
concatenated and indexed by offsets in the header.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .errors import DataFormatError
from .kernels import KernelSpec
from .pipeline import OvoModel, SvmModel
from .tensor import TensorTrain

MAGIC = b"TTKM"
VERSION = 1


def _core_shapes(dims, interior_ranks):
    chain = (1,) + tuple(interior_ranks) + (1,)
    return [(chain[k], dims[k], chain[k + 1]) for k in range(len(dims))]


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.asarray(arr, dtype=np.float64).ravel(order="F").astype("<f8").tobytes()


def _shared_tail(model: SvmModel):
    """The trailing cores common to every support TT (training guarantees
    this; hand-built models with ragged tails are rejected)."""
    tail = model.support[0].cores[1:]
    for j, tt in enumerate(model.support[1:], start=1):
        for k, core in enumerate(tt.cores[1:]):
            if core is not tail[k] and not np.array_equal(core, tail[k]):
                raise ValueError(
                    f"support vector {j} does not share trailing core {k + 1}; "
                    "only models with a common trailing chain can be saved"
                )
    return tail


def _model_header(model: SvmModel, meta) -> dict:
    return {
        "spec": model.spec.to_dict(),
        "dims": [int(n) for n in model.dims],
        "interior_ranks": [int(r) for r in model.interior_ranks],
        "neg_class": int(model.neg_class),
        "pos_class": int(model.pos_class),
        "normalize": bool(model.normalize),
        "grid_point": model.grid_point,
        "validation_accuracy": model.validation_accuracy,
        "support_count": len(model.support),
        "meta": meta if meta is not None else {},
    }


def _model_blob(model: SvmModel) -> bytes:
    parts = []
    if model.support:
        for core in _shared_tail(model):
            parts.append(_f64_bytes(core))
        for tt in model.support:
            parts.append(_f64_bytes(tt.cores[0]))
    parts.append(_f64_bytes(model.coef))
    parts.append(struct.pack("<d", float(model.bias)))
    return b"".join(parts)


def _model_from_parts(header: dict, blob: bytes, path) -> SvmModel:
    dims = tuple(header["dims"])
    ranks = tuple(header["interior_ranks"])
    shapes = _core_shapes(dims, ranks)
    count = int(header["support_count"])
    need = 8 * (sum(int(np.prod(s)) for s in shapes[1:]) if count else 0)
    need += 8 * count * int(np.prod(shapes[0]))
    need += 8 * count + 8
    if len(blob) != need:
        raise DataFormatError(
            f"{path}: blob of {len(blob)} bytes does not match header "
            f"(expected {need})"
        )
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=pos)
        pos += 8 * n
        return arr.reshape(shape, order="F")

    support = []
    if count:
        tail = tuple(take(s) for s in shapes[1:])
        for _ in range(count):
            support.append(TensorTrain(cores=(take(shapes[0]),) + tail))
    coef = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64)
    pos += 8 * count
    bias = struct.unpack_from("<d", blob, pos)[0]
    try:
        spec = KernelSpec.from_dict(header["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad kernel spec in header ({exc})") from exc
    return SvmModel(
        support=tuple(support),
        coef=coef,
        bias=float(bias),
        spec=spec,
        dims=dims,
        interior_ranks=ranks,
        neg_class=int(header["neg_class"]),
        pos_class=int(header["pos_class"]),
        normalize=bool(header["normalize"]),
        grid_point=header["grid_point"],
        validation_accuracy=header["validation_accuracy"],
        info={"meta": header.get("meta", {})},
    )


def save_model(path, model, meta=None) -> None:
    """Write a binary or one-vs-one model; ``meta`` lands in the header."""
    if isinstance(model, SvmModel):
        blob = _model_blob(model)
        header = {
            "kind": "binary",
            "model": _model_header(model, meta),
        }
    elif isinstance(model, OvoModel):
        blobs, entries = [], []
        offset = 0
        for pair in sorted(model.models):
            sub = model.models[pair]
            blob = _model_blob(sub)
            entries.append(
                {
                    "pair": [int(pair[0]), int(pair[1])],
                    "model": _model_header(sub, None),
                    "blob_offset": offset,
                    "blob_len": len(blob),
                }
            )
            blobs.append(blob)
            offset += len(blob)
        blob = b"".join(blobs)
        header = {
            "kind": "ovo",
            "classes": [int(c) for c in model.classes],
            "models": entries,
            "meta": meta if meta is not None else {},
        }
    else:
        raise ValueError(f"cannot save object of type {type(model).__name__}")
    header["checksum"] = zlib.crc32(blob) & 0xFFFFFFFF
    header["blob_len"] = len(blob)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)


def load_model(path):
    """Read a .ttkm file back into an SvmModel or OvoModel."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise DataFormatError(f"{path}: too short for a model file")
    if data[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise DataFormatError(
            f"{path}: file version {version} is not supported (this build reads "
            f"version {VERSION})"
        )
    if len(data) < 12 + header_len:
        raise DataFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: unreadable header ({exc})") from exc
    blob = data[12 + header_len:]
    if len(blob) != header.get("blob_len", -1):
        raise DataFormatError(
            f"{path}: blob of {len(blob)} bytes, header says {header.get('blob_len')}"
        )
    checksum = zlib.crc32(blob) & 0xFFFFFFFF
    if checksum != header.get("checksum"):
        raise DataFormatError(
            f"{path}: checksum mismatch (blob is corrupt: {checksum:#010x} != "
            f"{header.get('checksum'):#010x})"
        )
    kind = header.get("kind")
    if kind == "binary":
        return _model_from_parts(header["model"], blob, path)
    if kind == "ovo":
        models = {}
        for entry in header["models"]:
            a, b = entry["pair"]
            sub_blob = blob[entry["blob_offset"]:entry["blob_offset"] + entry["blob_len"]]
            models[(int(a), int(b))] = _model_from_parts(entry["model"], sub_blob, path)
        return OvoModel(classes=tuple(int(c) for c in header["classes"]), models=models)
    raise DataFormatError(f"{path}: unknown model kind {kind!r}")
