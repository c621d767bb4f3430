"""LEMB embedding file layout.

Header: magic ``LEMB``, u32 version, u32 dim, u32 n_docs, u32 metadata
length + UTF-8 JSON. Then one record per document: u32 doc_id length +
bytes, u32 n_lines, n_lines * dim little-endian float32 values. All
integers little-endian.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LEMB"
VERSION = 1


class LembError(ValueError):
    pass


def write_lemb(path, docs, dim: int, metadata: dict | None = None) -> None:
    """``docs``: iterable of (doc_id, (n, dim) float array). Order preserved."""
    entries = list(docs)
    seen: set[str] = set()
    for doc_id, _ in entries:
        if doc_id in seen:
            raise LembError(f"duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
    meta = json.dumps(metadata or {}, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, dim, len(entries)))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        for doc_id, matrix in entries:
            matrix = np.asarray(matrix, dtype="<f4")
            if matrix.size and matrix.shape[1] != dim:
                raise LembError(
                    f"{doc_id}: width {matrix.shape[1]} != file dim {dim}"
                )
            raw = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", matrix.shape[0]))
            fh.write(matrix.tobytes(order="C"))


def read_lemb(path) -> tuple[dict[str, np.ndarray], int, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise LembError("not a LEMB file (bad magic)")
        version, dim, n_docs = struct.unpack("<III", fh.read(12))
        if version != VERSION:
            raise LembError(f"unsupported version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        metadata = json.loads(fh.read(meta_len).decode("utf-8")) if meta_len else {}
        docs: dict[str, np.ndarray] = {}
        for _ in range(n_docs):
            (id_len,) = struct.unpack("<I", fh.read(4))
            doc_id = fh.read(id_len).decode("utf-8")
            (n_lines,) = struct.unpack("<I", fh.read(4))
            buf = fh.read(n_lines * dim * 4)
            if len(buf) != n_lines * dim * 4:
                raise LembError(f"truncated record for {doc_id!r}")
            docs[doc_id] = np.frombuffer(buf, dtype="<f4").reshape(n_lines, dim)
    return docs, dim, metadata
