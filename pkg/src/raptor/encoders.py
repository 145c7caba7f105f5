"""Per-slice patch tokens.

The synthetic encoder stands in for a frozen 2D vision backbone: each
T×T patch is flattened and pushed through a fixed random linear map with
a tanh squashing, giving bounded, deterministic, Lipschitz tokens.  Real
backbone tokens enter through RTOK files produced offline.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import HeaderInconsistent, MagicMismatch, ShapeMismatch, UnsupportedVersion
from .volumes import Axis

RTOK_MAGIC = b"RTOK"
RTOK_VERSION = 1
_RTOK_FIXED = struct.Struct("<4sHBB3I12x")   # 32 bytes
_RTOK_EXT = struct.Struct("<32s16x")         # 48 bytes
RTOK_HEADER_BYTES = _RTOK_FIXED.size + _RTOK_EXT.size

KIND_SYNTHETIC = "synthetic"
KIND_TOKENFILE = "tokenfile"


@dataclass(frozen=True)
class EncoderSpec:
    """Identity of an encoder; id_hash is a pure function of the fields."""

    kind: str = KIND_SYNTHETIC
    patch_size: int = 16
    token_dim: int = 1024
    seed: int = 0
    source_path: str | None = None

    def __post_init__(self):
        if self.kind not in (KIND_SYNTHETIC, KIND_TOKENFILE):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.patch_size < 1 or self.token_dim < 1:
            raise ValueError("patch_size and token_dim must be positive")

    @property
    def id_hash(self):
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(struct.pack("<IIQ", self.patch_size, self.token_dim, self.seed))
        h.update((self.source_path or "").encode())
        return h.digest()

    def patch_grid(self, extent):
        if extent % self.patch_size != 0:
            raise ShapeMismatch(
                f"extent {extent} not divisible by patch size {self.patch_size}"
            )
        return extent // self.patch_size

    def mixing_matrix(self):
        """The fixed token_dim × T² map, entries N(0, 1/T²)."""
        t2 = self.patch_size * self.patch_size
        flat = rng.gaussian(self.seed, self.token_dim * t2) / self.patch_size
        return flat.reshape(self.token_dim, t2).astype(np.float32)


@dataclass(frozen=True)
class TokenTensor:
    """Per-slice patch tokens for one viewing axis: (D, p², d) f32."""

    axis: Axis
    values: np.ndarray
    encoder_id: bytes

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ShapeMismatch(f"token tensor must be 3D, got {v.ndim}D")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "axis", Axis(self.axis))
        if len(self.encoder_id) != 32:
            raise ValueError("encoder_id must be a 32-byte digest")

    @property
    def n_slices(self):
        return self.values.shape[0]

    @property
    def n_patches(self):
        return self.values.shape[1]

    @property
    def token_dim(self):
        return self.values.shape[2]

    @property
    def patch_grid(self):
        p = int(round(self.n_patches ** 0.5))
        if p * p != self.n_patches:
            raise ShapeMismatch(f"{self.n_patches} patches is not a square grid")
        return p


def _patchify(slc, patch):
    d = slc.shape[0]
    p = d // patch
    # (p, T, p, T) -> (p, p, T, T) -> (p², T²), patches row-major
    return (
        slc.reshape(p, patch, p, patch)
        .transpose(0, 2, 1, 3)
        .reshape(p * p, patch * patch)
    )


def encode_slice(spec, slc, mixing=None):
    """Tokens for one D×D slice: tanh(G · patch) per patch, (p², d) f32."""
    if spec.kind != KIND_SYNTHETIC:
        raise ValueError("only the synthetic encoder computes tokens")
    slc = np.asarray(slc, dtype=np.float32)
    if slc.ndim != 2 or slc.shape[0] != slc.shape[1]:
        raise ShapeMismatch(f"expected a square slice, got {slc.shape}")
    spec.patch_grid(slc.shape[0])
    g = spec.mixing_matrix() if mixing is None else mixing
    patches = _patchify(slc, spec.patch_size)
    return np.tanh(patches @ g.T)


def encode_stack(spec, stack, mixing=None):
    """Encode every slice of a stack, preserving slice order."""
    if spec.kind != KIND_SYNTHETIC:
        raise ValueError("only the synthetic encoder computes tokens")
    d = stack.slices.shape[1]
    p = spec.patch_grid(d)
    g = spec.mixing_matrix() if mixing is None else mixing
    n = len(stack)
    tokens = np.empty((n, p * p, spec.token_dim), dtype=np.float32)
    # per-slice gemm keeps results identical to encode_slice calls
    for j in range(n):
        tokens[j] = np.tanh(_patchify(stack.slices[j], spec.patch_size) @ g.T)
    return TokenTensor(axis=stack.axis, values=tokens, encoder_id=spec.id_hash)


def save_tokens(tensor, path):
    """Write an RTOK file; returns the byte count."""
    d_slices = tensor.n_slices
    p = tensor.patch_grid
    blob = _RTOK_FIXED.pack(
        RTOK_MAGIC, RTOK_VERSION, int(tensor.axis), 0, d_slices, p, tensor.token_dim
    )
    blob += _RTOK_EXT.pack(tensor.encoder_id)
    blob += tensor.values.astype("<f4").tobytes()
    Path(path).write_bytes(blob)
    return len(blob)


def load_tokens(path):
    """Read an RTOK file back into a TokenTensor."""
    data = Path(path).read_bytes()
    if len(data) < RTOK_HEADER_BYTES:
        raise HeaderInconsistent(f"{path}: shorter than the {RTOK_HEADER_BYTES}-byte header")
    magic, version, axis, _res, d_slices, p, token_dim = _RTOK_FIXED.unpack_from(data)
    if magic != RTOK_MAGIC:
        raise MagicMismatch(f"bad signature {magic!r}")
    if version != RTOK_VERSION:
        raise UnsupportedVersion(f"RTOK version {version}")
    (encoder_id,) = _RTOK_EXT.unpack_from(data, _RTOK_FIXED.size)
    expected = d_slices * p * p * token_dim * 4
    payload = data[RTOK_HEADER_BYTES:]
    if len(payload) != expected:
        raise HeaderInconsistent(
            f"{path}: payload {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(d_slices, p * p, token_dim)
    return TokenTensor(axis=Axis(axis), values=values, encoder_id=encoder_id)
