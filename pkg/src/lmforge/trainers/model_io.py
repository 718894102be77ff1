"""Binary model persistence.

Layout (little-endian): magic "LMFMDL1\\0", u32 version, u32 kind tag
(0=classifier, 1=linear student, 2=mlp1 student), u32 header length, JSON
header (dims, classes, provider fingerprint, parameter shapes), row-major
float32 parameter blocks in header order, trailing CRC32 of everything
before it. Parameters are held as float32 in memory too, so a round trip
reproduces bit-exact parameters and therefore identical predictions.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptModelError, VersionMismatchError
from .classifier import ClassifierHead
from .data import LabelEncoder
from .mimicker import StudentModel

MAGIC = b"LMFMDL1\x00"
FORMAT_VERSION = 1
KIND_TAGS = {"classifier": 0, "linear": 1, "mlp1": 2}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


def _param_blocks(model) -> tuple[dict, list[np.ndarray]]:
    if isinstance(model, ClassifierHead):
        header = {
            "dim": model.dim,
            "classes": list(model.encoder.classes),
            "provider": list(model.provider_fingerprint) if model.provider_fingerprint else None,
            "params": [["W", list(model.W.shape)], ["b", list(model.b.shape)]],
        }
        return header, [model.W, model.b]
    if isinstance(model, StudentModel):
        names = sorted(model.params)
        header = {
            "kind": model.kind,
            "in_dim": model.in_dim,
            "out_dim": model.out_dim,
            "hidden_dim": model.hidden_dim,
            "params": [[n, list(model.params[n].shape)] for n in names],
        }
        return header, [model.params[n] for n in names]
    raise TypeError(f"cannot persist {type(model).__name__}")


def save_model(model, path: str | Path) -> None:
    header, blocks = _param_blocks(model)
    if isinstance(model, ClassifierHead):
        tag = KIND_TAGS["classifier"]
    else:
        tag = KIND_TAGS[model.kind]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<III", FORMAT_VERSION, tag, len(header_bytes))
    out += header_bytes
    for block in blocks:
        out += np.ascontiguousarray(block, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    Path(path).write_bytes(bytes(out))


def load_model(path: str | Path):
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise VersionMismatchError(f"{path}: not an lmforge model (bad magic)")
    offset = len(MAGIC)
    if len(data) < offset + 12 + 4:
        raise CorruptModelError("truncated header")
    version, tag, header_len = struct.unpack_from("<III", data, offset)
    offset += 12
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported model format version {version}")
    if tag not in TAG_KINDS:
        raise CorruptModelError(f"unknown kind tag {tag}")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CorruptModelError("checksum mismatch")
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelError(f"bad JSON header: {exc}") from exc
    offset += header_len

    blocks: dict[str, np.ndarray] = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 4
        if end > len(data) - 4:
            raise CorruptModelError(f"truncated parameter block {name!r}")
        blocks[name] = np.frombuffer(data[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    if offset != len(data) - 4:
        raise CorruptModelError("trailing bytes after parameter blocks")

    kind = TAG_KINDS[tag]
    if kind == "classifier":
        provider = header.get("provider")
        return ClassifierHead(
            W=blocks["W"],
            b=blocks["b"],
            encoder=LabelEncoder(classes=tuple(header["classes"])),
            dim=int(header["dim"]),
            provider_fingerprint=tuple(provider) if provider else None,
        )
    return StudentModel(
        kind=kind,
        in_dim=int(header["in_dim"]),
        out_dim=int(header["out_dim"]),
        hidden_dim=int(header.get("hidden_dim", 0)),
        params=blocks,
    )
