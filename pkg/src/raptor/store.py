"""Persistent embedding sets with full provenance (REMB format).

Layout, little-endian: a fixed 64-byte header, a length-prefixed id
table closed by a 0xFFFF sentinel, then `count` fixed-length f32 rows.
Rows are fixed length, so row i can be read by offset without touching
the others.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import (
    DuplicateId,
    HeaderInconsistent,
    IoFailure,
    MagicMismatch,
    UnsupportedVersion,
)
from .reduction import SCALE_CODES, mask_to_axes

REMB_MAGIC = b"REMB"
REMB_VERSION = 1
_HEADER = struct.Struct("<4sHBBBB3HIQ32sI")
assert _HEADER.size == 64
_ID_SENTINEL = 0xFFFF

_SCALE_NAMES = {code: name for name, code in SCALE_CODES.items()}


@dataclass
class EmbeddingSet:
    """Rows of identically-shaped embedding vectors plus their provenance."""

    n_projections: int
    patch_grid: int
    token_dim: int
    seed: int
    scale_mode: str
    axes_mask: int
    encoder_id: bytes
    ids: list
    rows: np.ndarray          # (count, row_len) f32
    prng_id: str = rng.PRNG_ID
    version: int = REMB_VERSION

    @property
    def count(self):
        return len(self.ids)

    @property
    def row_length(self):
        n_axes = len(mask_to_axes(self.axes_mask))
        return n_axes * self.n_projections * self.patch_grid ** 2

    def validate(self):
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateId("embedding ids must be unique")
        if self.rows.shape != (self.count, self.row_length):
            raise HeaderInconsistent(
                f"rows {self.rows.shape} != ({self.count}, {self.row_length})"
            )

    @classmethod
    def from_embeddings(cls, embeddings):
        if not embeddings:
            raise ValueError("need at least one embedding")
        first = embeddings[0]
        for e in embeddings:
            if (
                e.n_projections,
                e.patch_grid,
                e.token_dim,
                e.seed,
                e.scale_mode,
                e.axes_mask,
                e.encoder_id,
            ) != (
                first.n_projections,
                first.patch_grid,
                first.token_dim,
                first.seed,
                first.scale_mode,
                first.axes_mask,
                first.encoder_id,
            ):
                raise HeaderInconsistent("embeddings carry inconsistent provenance")
        return cls(
            n_projections=first.n_projections,
            patch_grid=first.patch_grid,
            token_dim=first.token_dim,
            seed=first.seed,
            scale_mode=first.scale_mode,
            axes_mask=first.axes_mask,
            encoder_id=first.encoder_id,
            ids=[e.volume_id for e in embeddings],
            rows=np.stack([e.vector for e in embeddings]).astype(np.float32),
        )


def _pack_header(emb_set):
    from .rng import PRNG_CODE

    return _HEADER.pack(
        REMB_MAGIC,
        emb_set.version,
        PRNG_CODE,
        SCALE_CODES[emb_set.scale_mode],
        emb_set.axes_mask,
        0,
        emb_set.n_projections,
        emb_set.patch_grid,
        emb_set.token_dim,
        emb_set.count,
        emb_set.seed,
        emb_set.encoder_id,
        0,
    )


def write_embeddings(emb_set, path):
    """Write a REMB file; returns the byte count."""
    emb_set.validate()
    parts = [_pack_header(emb_set)]
    for vid in emb_set.ids:
        raw = vid.encode("utf-8")
        if len(raw) >= _ID_SENTINEL:
            raise ValueError(f"id too long: {vid!r}")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(struct.pack("<H", _ID_SENTINEL))
    parts.append(np.ascontiguousarray(emb_set.rows, dtype="<f4").tobytes())
    blob = b"".join(parts)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return len(blob)


def _parse_header(data, path):
    if len(data) < _HEADER.size:
        raise HeaderInconsistent(f"{path}: shorter than the {_HEADER.size}-byte header")
    (
        magic,
        version,
        prng_code,
        scale_code,
        axes_mask,
        _reserved,
        k,
        p,
        d,
        count,
        seed,
        encoder_id,
        _reserved2,
    ) = _HEADER.unpack_from(data)
    if magic != REMB_MAGIC:
        raise MagicMismatch(f"{path}: bad signature {magic!r}")
    if version != REMB_VERSION:
        raise UnsupportedVersion(f"{path}: REMB version {version}")
    if scale_code not in _SCALE_NAMES:
        raise HeaderInconsistent(f"{path}: unknown scale code {scale_code}")
    if axes_mask == 0 or axes_mask > 7:
        raise HeaderInconsistent(f"{path}: invalid axes mask {axes_mask}")
    if prng_code != rng.PRNG_CODE:
        raise HeaderInconsistent(f"{path}: unknown prng code {prng_code}")
    return k, p, d, count, seed, _SCALE_NAMES[scale_code], axes_mask, encoder_id


def _parse_id_table(data, offset, count, path):
    ids = []
    for _ in range(count):
        if offset + 2 > len(data):
            raise HeaderInconsistent(f"{path}: id table truncated")
        (length,) = struct.unpack_from("<H", data, offset)
        if length == _ID_SENTINEL:
            raise HeaderInconsistent(f"{path}: id table ends before {count} entries")
        offset += 2
        if offset + length > len(data):
            raise HeaderInconsistent(f"{path}: id entry truncated")
        ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    if offset + 2 > len(data):
        raise HeaderInconsistent(f"{path}: missing id table sentinel")
    (sentinel,) = struct.unpack_from("<H", data, offset)
    if sentinel != _ID_SENTINEL:
        raise HeaderInconsistent(f"{path}: id table sentinel missing")
    return ids, offset + 2


def read_embeddings(path):
    """Read a full REMB file back into an EmbeddingSet."""
    data = Path(path).read_bytes()
    k, p, d, count, seed, scale_mode, axes_mask, encoder_id = _parse_header(data, path)
    ids, offset = _parse_id_table(data, _HEADER.size, count, path)
    if len(set(ids)) != len(ids):
        raise DuplicateId(f"{path}: duplicate volume ids")
    row_len = bin(axes_mask).count("1") * k * p * p
    expected = count * row_len * 4
    if len(data) - offset != expected:
        raise HeaderInconsistent(
            f"{path}: {len(data) - offset} payload bytes, header implies {expected}"
        )
    rows = np.frombuffer(data, dtype="<f4", count=count * row_len, offset=offset)
    return EmbeddingSet(
        n_projections=k,
        patch_grid=p,
        token_dim=d,
        seed=seed,
        scale_mode=scale_mode,
        axes_mask=axes_mask,
        encoder_id=encoder_id,
        ids=ids,
        rows=rows.reshape(count, row_len).copy(),
    )


def read_row(path, index):
    """Read a single row by offset (random access; no full-file parse)."""
    data = Path(path).read_bytes()
    k, p, d, count, seed, scale_mode, axes_mask, _enc = _parse_header(data, path)
    if not 0 <= index < count:
        raise IndexError(f"row {index} outside 0..{count - 1}")
    ids, offset = _parse_id_table(data, _HEADER.size, count, path)
    row_len = bin(axes_mask).count("1") * k * p * p
    start = offset + index * row_len * 4
    row = np.frombuffer(data, dtype="<f4", count=row_len, offset=start)
    return ids[index], row.copy()


def merge_embeddings(first, second):
    """Concatenate two sets that share provenance."""
    for attr in ("n_projections", "patch_grid", "token_dim", "seed", "scale_mode",
                 "axes_mask", "encoder_id"):
        if getattr(first, attr) != getattr(second, attr):
            raise HeaderInconsistent(f"sets disagree on {attr}")
    merged = EmbeddingSet(
        n_projections=first.n_projections,
        patch_grid=first.patch_grid,
        token_dim=first.token_dim,
        seed=first.seed,
        scale_mode=first.scale_mode,
        axes_mask=first.axes_mask,
        encoder_id=first.encoder_id,
        ids=list(first.ids) + list(second.ids),
        rows=np.concatenate([first.rows, second.rows]),
    )
    merged.validate()
    return merged


def footprint_ratio(volume_path, embedding_row):
    """Embedding bytes divided by the gzip-compressed volume bytes."""
    try:
        raw = Path(volume_path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    compressed = gzip.compress(raw, compresslevel=6)
    return (np.asarray(embedding_row).size * 4) / len(compressed)


# ---------------------------------------------------------------------------
# Label manifests


def read_labels_csv(path):
    """(ids, values, column names) from an `id,label[,...]` CSV."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "id":
            raise HeaderInconsistent(f"{path}: first column must be 'id'")
        ids, values = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            values.append([float(v) for v in row[1:]])
    return ids, np.asarray(values, dtype=np.float64), header[1:]


def write_labels_csv(path, ids, values, columns=("label",)):
    values = np.atleast_2d(np.asarray(values, dtype=np.float64).T).T
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *columns])
        for vid, row in zip(ids, values):
            writer.writerow([vid, *(f"{v:g}" for v in row)])
    return Path(path)
