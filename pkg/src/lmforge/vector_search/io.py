"""Bit-exact index persistence.

Little-endian layout: magic "LMFIDX1\\0", u32 format version, u32 dim,
u64 live count, u32 backend tag (0=flat, 1=hnsw); for hnsw a params block
(u32 M, u32 ef_construction, f64 level_multiplier, i64 rng_seed); vector
block count*dim float32; doc block per doc (u64 doc_id, u32 text_len,
text bytes, u32 meta_len, canonical JSON bytes); for hnsw an adjacency
block per node (u8 max_level, then per level u32 degree + u32 neighbor
ordinals); trailing CRC32 of all preceding bytes.

Saving compacts tombstoned nodes away (ordinals are remapped, edges into
tombstones dropped); an index with no pending deletions round-trips to
bit-identical answers.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptIndexError, VersionMismatchError
from .base import BaseIndex
from .flat import FlatIndex
from .hnsw import HnswIndex, HnswParams

MAGIC = b"LMFIDX1\x00"
FORMAT_VERSION = 1
BACKEND_TAGS = {"flat": 0, "hnsw": 1}


def _canonical_metadata(metadata: dict) -> bytes:
    return json.dumps(metadata, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def save_index(index: BaseIndex, path: str | Path) -> None:
    live = [o for o in range(len(index._doc_ids)) if o not in index._deleted]
    remap = {old: new for new, old in enumerate(live)}

    out = bytearray()
    out += MAGIC
    out += struct.pack("<IIQI", FORMAT_VERSION, index.dim, len(live),
                       BACKEND_TAGS[index.backend])

    if isinstance(index, HnswIndex):
        p = index.params
        out += struct.pack("<IIdq", p.M, p.ef_construction, p.level_multiplier, p.rng_seed)

    if live:
        out += index._vectors[np.asarray(live, dtype=np.intp)].astype("<f4").tobytes()

    for old in live:
        text = index._texts[old].encode("utf-8")
        meta = _canonical_metadata(index._metadata[old])
        out += struct.pack("<QI", index._doc_ids[old], len(text))
        out += text
        out += struct.pack("<I", len(meta))
        out += meta

    if isinstance(index, HnswIndex):
        for old in live:
            levels = index._graph[old]
            out += struct.pack("<B", len(levels) - 1)
            for adjacency in levels:
                kept = [remap[n] for n in adjacency if n in remap]
                out += struct.pack("<I", len(kept))
                out += struct.pack(f"<{len(kept)}I", *kept) if kept else b""

    out += struct.pack("<I", zlib.crc32(bytes(out)))
    Path(path).write_bytes(bytes(out))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise CorruptIndexError(self.offset, f"truncated while reading {what}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))


def load_index(path: str | Path, ef_search: int | None = None) -> BaseIndex:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise VersionMismatchError(f"{path}: not an lmforge index (bad magic)")
    cursor = _Cursor(data)
    cursor.offset = len(MAGIC)
    (version,) = cursor.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported index format version {version}")

    if len(data) < cursor.offset + 4:
        raise CorruptIndexError(len(data), "truncated before checksum")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CorruptIndexError(len(data) - 4, "checksum mismatch")

    dim, count, backend_tag = cursor.unpack("<IQI", "header")
    if backend_tag not in BACKEND_TAGS.values():
        raise CorruptIndexError(cursor.offset - 4, f"unknown backend tag {backend_tag}")

    if backend_tag == BACKEND_TAGS["hnsw"]:
        M, ef_construction, level_multiplier, rng_seed = cursor.unpack("<IIdq", "hnsw params")
        params = HnswParams(
            M=M, ef_construction=ef_construction,
            ef_search=ef_search or 100,
            level_multiplier=level_multiplier, rng_seed=rng_seed,
        )
        index: BaseIndex = HnswIndex(dim=dim, params=params)
    else:
        index = FlatIndex(dim=dim)

    raw = cursor.take(count * dim * 4, "vector block")
    vectors = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()

    doc_ids: list[int] = []
    texts: list[str] = []
    metadata: list[dict] = []
    for i in range(count):
        doc_id, text_len = cursor.unpack("<QI", f"doc {i} header")
        text = cursor.take(text_len, f"doc {i} text").decode("utf-8")
        (meta_len,) = cursor.unpack("<I", f"doc {i} metadata length")
        meta_raw = cursor.take(meta_len, f"doc {i} metadata")
        try:
            meta = json.loads(meta_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptIndexError(cursor.offset - meta_len, f"bad metadata JSON: {exc}")
        doc_ids.append(doc_id)
        texts.append(text)
        metadata.append(meta)

    if len(set(doc_ids)) != len(doc_ids):
        raise CorruptIndexError(cursor.offset, "duplicate doc ids")

    index._buffer = np.empty((max(count, 8), dim), dtype=np.float32)
    index._buffer[:count] = vectors
    index._doc_ids = doc_ids
    index._texts = texts
    index._metadata = metadata
    index._id_to_ord = {doc_id: o for o, doc_id in enumerate(doc_ids)}
    index._deleted = set()

    if isinstance(index, HnswIndex):
        levels: list[int] = []
        graph: list[list[list[int]]] = []
        for node in range(count):
            (max_level,) = cursor.unpack("<B", f"node {node} level")
            levels.append(max_level)
            per_level: list[list[int]] = []
            for layer in range(max_level + 1):
                (degree,) = cursor.unpack("<I", f"node {node} layer {layer} degree")
                if degree:
                    neighbors = list(cursor.unpack(f"<{degree}I",
                                                   f"node {node} layer {layer} neighbors"))
                else:
                    neighbors = []
                if any(n >= count for n in neighbors):
                    raise CorruptIndexError(cursor.offset, "neighbor ordinal out of range")
                per_level.append(neighbors)
            graph.append(per_level)
        index._levels = levels
        index._graph = graph
        if count:
            index._max_level = max(levels)
            # The live entry point is always the first node to reach the top
            # level, i.e. the smallest ordinal among max-level nodes.
            index._entry = min(o for o, lv in enumerate(levels) if lv == index._max_level)
        else:
            index._max_level = 0
            index._entry = None

    if cursor.offset != len(data) - 4:
        raise CorruptIndexError(cursor.offset, "trailing bytes before checksum")
    return index
