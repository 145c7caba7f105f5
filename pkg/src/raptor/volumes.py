"""Cubic voxel volumes: IO, normalization, resampling, tri-axial slicing.

Voxels are stored row-major with the first array axis slowest.  The three
slicing directions are simply the three array axes: axial = axis 0,
coronal = axis 1, sagittal = axis 2.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import backend
from .errors import (
    HeaderInconsistent,
    MagicMismatch,
    NonCubic,
    NonFinite,
    TruncatedPayload,
    UnsupportedVersion,
)

RVOL_MAGIC = b"RVOL"
RVOL_VERSION = 1
_RVOL_HEADER = struct.Struct("<4sHBB3I")

DTYPE_U8 = 0
DTYPE_F32 = 1
FLAG_GZIP = 0x01


class Axis(IntEnum):
    AXIAL = 0
    CORONAL = 1
    SAGITTAL = 2

    @property
    def letter(self):
        return "acs"[int(self)]

    @classmethod
    def from_letter(cls, letter):
        try:
            return cls("acs".index(letter.lower()))
        except ValueError:
            raise ValueError(f"unknown axis letter {letter!r}") from None


@dataclass(frozen=True)
class Volume:
    """A dense 3D grid of f32 voxels plus identity metadata."""

    id: str
    voxels: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.voxels, dtype=np.float32)
        if v.ndim != 3:
            raise ValueError(f"expected 3 dims, got {v.ndim}")
        if not np.isfinite(v).all():
            raise NonFinite(f"volume {self.id!r} contains NaN/Inf")
        object.__setattr__(self, "voxels", v)

    @property
    def dims(self):
        return self.voxels.shape

    @property
    def value_range(self):
        return float(self.voxels.min()), float(self.voxels.max())

    @property
    def is_cubic(self):
        dx, dy, dz = self.dims
        return dx == dy == dz


@dataclass(frozen=True)
class SliceStack:
    """All cross-sections of a cubic volume perpendicular to one axis."""

    axis: Axis
    slices: np.ndarray  # (D, D, D) f32; leading axis indexes slices

    def __len__(self):
        return self.slices.shape[0]

    def __getitem__(self, j):
        return self.slices[j]


def load_volume(path, format, dims=None, volume_id=None):
    """Read a volume file ("rvol", "raw_u8" or "idx3d").

    raw_u8 files are headerless, so `dims` must be supplied.
    """
    path = Path(path)
    data = path.read_bytes()
    vid = volume_id if volume_id is not None else path.stem
    fmt = format.lower()
    if fmt == "rvol":
        voxels = _parse_rvol(data)
    elif fmt == "raw_u8":
        if dims is None:
            raise ValueError("raw_u8 needs explicit dims")
        shape = (dims, dims, dims) if np.isscalar(dims) else tuple(dims)
        expected = int(np.prod(shape))
        if len(data) < expected:
            raise TruncatedPayload(f"{path}: {len(data)} bytes < {expected}")
        voxels = np.frombuffer(data[:expected], dtype=np.uint8).reshape(shape)
        voxels = voxels.astype(np.float32)
    elif fmt == "idx3d":
        voxels = _parse_idx3d(data)
    else:
        raise ValueError(f"unknown volume format {format!r}")
    if not np.isfinite(voxels).all():
        raise NonFinite(f"{path}: payload contains NaN/Inf")
    return Volume(id=vid, voxels=voxels)


def save_volume(volume, path, dtype="f32", compress=False):
    """Write an RVOL file; returns the byte count."""
    dx, dy, dz = volume.dims
    if dtype == "f32":
        payload = volume.voxels.astype("<f4").tobytes()
        code = DTYPE_F32
    elif dtype == "u8":
        payload = np.clip(np.rint(volume.voxels), 0, 255).astype(np.uint8).tobytes()
        code = DTYPE_U8
    else:
        raise ValueError(f"unknown dtype {dtype!r}")
    flags = 0
    if compress:
        payload = gzip.compress(payload)
        flags |= FLAG_GZIP
    blob = _RVOL_HEADER.pack(RVOL_MAGIC, RVOL_VERSION, code, flags, dx, dy, dz) + payload
    Path(path).write_bytes(blob)
    return len(blob)


def _parse_rvol(data):
    if len(data) < _RVOL_HEADER.size:
        raise TruncatedPayload(f"file shorter than the {_RVOL_HEADER.size}-byte header")
    magic, version, code, flags, dx, dy, dz = _RVOL_HEADER.unpack_from(data)
    if magic != RVOL_MAGIC:
        raise MagicMismatch(f"bad signature {magic!r}")
    if version != RVOL_VERSION:
        raise UnsupportedVersion(f"RVOL version {version}")
    payload = data[_RVOL_HEADER.size :]
    if flags & FLAG_GZIP:
        try:
            payload = gzip.decompress(payload)
        except (OSError, EOFError) as exc:
            raise TruncatedPayload(f"compressed payload unreadable: {exc}") from exc
    count = dx * dy * dz
    if code == DTYPE_U8:
        if len(payload) < count:
            raise TruncatedPayload(f"{len(payload)} payload bytes < {count}")
        return np.frombuffer(payload[:count], dtype=np.uint8).reshape(dx, dy, dz).astype(np.float32)
    if code == DTYPE_F32:
        if len(payload) < 4 * count:
            raise TruncatedPayload(f"{len(payload)} payload bytes < {4 * count}")
        return np.frombuffer(payload[: 4 * count], dtype="<f4").reshape(dx, dy, dz).astype(np.float32)
    raise HeaderInconsistent(f"unknown dtype code {code}")


def _parse_idx3d(data):
    # IDX container, big-endian: 0x00 0x00 <dtype> <ndims>, then one u32 per dim
    if len(data) < 4:
        raise TruncatedPayload("file shorter than the idx magic")
    zero, dtype_code, ndims = data[0] << 8 | data[1], data[2], data[3]
    if zero != 0:
        raise MagicMismatch("idx magic must start with two zero bytes")
    if ndims != 3:
        raise HeaderInconsistent(f"need 3 dimension fields, found {ndims}")
    if len(data) < 4 + 12:
        raise TruncatedPayload("missing dimension fields")
    dims = struct.unpack_from(">3I", data, 4)
    payload = data[16:]
    count = int(np.prod(dims))
    if dtype_code == 0x08:
        if len(payload) < count:
            raise TruncatedPayload(f"{len(payload)} payload bytes < {count}")
        arr = np.frombuffer(payload[:count], dtype=np.uint8)
    elif dtype_code == 0x0D:
        if len(payload) < 4 * count:
            raise TruncatedPayload(f"{len(payload)} payload bytes < {4 * count}")
        arr = np.frombuffer(payload[: 4 * count], dtype=">f4")
    else:
        raise HeaderInconsistent(f"unsupported idx dtype 0x{dtype_code:02x}")
    return arr.reshape(dims).astype(np.float32)


def normalize(volume, mode="global_minmax"):
    """Affine map of all voxels onto [0, 1]; constant volumes become zeros."""
    if mode != "global_minmax":
        raise ValueError(f"unknown normalization mode {mode!r}")
    lo, hi = volume.value_range
    if hi == lo:
        out = np.zeros_like(volume.voxels)
    else:
        out = (volume.voxels - np.float32(lo)) / np.float32(hi - lo)
    return Volume(id=volume.id, voxels=out)


def resample(volume, target):
    """Trilinear align-corners resample onto a target³ grid."""
    if target < 2:
        raise ValueError("target extent must be at least 2")
    if not volume.is_cubic:
        raise NonCubic(f"resample expects a cube, got {volume.dims}")
    out = backend.resample_trilinear(volume.voxels, int(target))
    return Volume(id=volume.id, voxels=out)


def slice_stack(volume, axis):
    """All D cross-sections perpendicular to `axis`, in index order."""
    if not volume.is_cubic:
        raise NonCubic(f"slicing expects a cube, got {volume.dims}")
    axis = Axis(axis)
    slices = np.ascontiguousarray(np.moveaxis(volume.voxels, int(axis), 0))
    return SliceStack(axis=axis, slices=slices)


def restack(stack, volume_id="restacked"):
    """Inverse of slice_stack: rebuild the volume from its slices."""
    voxels = np.moveaxis(stack.slices, 0, int(stack.axis))
    return Volume(id=volume_id, voxels=np.ascontiguousarray(voxels))
