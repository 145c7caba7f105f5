"""Slice-mean pooling, seeded Gaussian projection, embedding assembly,
and the PCA baseline used for speed/quality comparisons.

Embedding layout is fixed: axes in ascending order (axial, coronal,
sagittal), then patch index row-major, then projection component.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend, rng
from .errors import AxisMissing, DimMismatch, InsufficientSamples
from .volumes import Axis

SCALE_UNIT = "unit"
SCALE_INVSQRTK = "invsqrtk"
SCALE_CODES = {SCALE_UNIT: 0, SCALE_INVSQRTK: 1}

ALL_AXES = (Axis.AXIAL, Axis.CORONAL, Axis.SAGITTAL)


def axes_to_mask(axes):
    mask = 0
    for a in axes:
        mask |= 1 << int(Axis(a))
    if mask == 0:
        raise AxisMissing("no axes selected")
    return mask


def mask_to_axes(mask):
    return tuple(a for a in ALL_AXES if mask >> int(a) & 1)


@dataclass(frozen=True)
class ProjectionMatrix:
    """Seeded K×d Gaussian matrix; entries are a pure function of the seed."""

    n_projections: int
    token_dim: int
    seed: int
    entries: np.ndarray
    scale_mode: str = SCALE_INVSQRTK

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=np.float32)
        if e.shape != (self.n_projections, self.token_dim):
            raise DimMismatch(f"entries {e.shape} != ({self.n_projections}, {self.token_dim})")
        object.__setattr__(self, "entries", e)


def gen_projection(n_projections, token_dim, seed, scale_mode=SCALE_INVSQRTK):
    """Sample the projection matrix from the named deterministic stream."""
    if n_projections < 1 or token_dim < 1:
        raise ValueError("projection dims must be positive")
    if scale_mode not in SCALE_CODES:
        raise ValueError(f"unknown scale mode {scale_mode!r}")
    flat = rng.gaussian(seed, n_projections * token_dim)
    if scale_mode == SCALE_INVSQRTK:
        flat = flat / np.sqrt(float(n_projections))
    entries = flat.reshape(n_projections, token_dim).astype(np.float32)
    return ProjectionMatrix(n_projections, token_dim, seed, entries, scale_mode)


def identity_projection(token_dim, scale_mode=SCALE_UNIT):
    """Test hook: K = d with the identity matrix."""
    return ProjectionMatrix(
        token_dim, token_dim, 0, np.eye(token_dim, dtype=np.float32), scale_mode
    )


@dataclass(frozen=True)
class PooledTokens:
    """Token grid averaged over the slice axis of one view: (p², d) f32."""

    axis: Axis
    values: np.ndarray


def mean_pool(tensor):
    """Average the token tensor over slices (f64 accumulation, slice order)."""
    pooled = backend.mean_pool_seq(tensor.values)
    return PooledTokens(axis=tensor.axis, values=pooled)


def project(pooled, matrix):
    """Apply the projection per patch: out[:, q] = R · pooled[q, :]."""
    values = pooled.values if isinstance(pooled, PooledTokens) else np.asarray(pooled)
    if values.shape[1] != matrix.token_dim:
        raise DimMismatch(
            f"token dim {values.shape[1]} != matrix width {matrix.token_dim}"
        )
    return matrix.entries @ values.astype(np.float32).T


@dataclass(frozen=True)
class Embedding:
    """Flattened projected tokens plus the provenance needed to rebuild them."""

    vector: np.ndarray
    volume_id: str
    n_projections: int
    patch_grid: int
    token_dim: int
    seed: int
    scale_mode: str
    axes_mask: int
    encoder_id: bytes
    prng_id: str = rng.PRNG_ID

    @property
    def meta(self):
        return {
            "volume_id": self.volume_id,
            "k": self.n_projections,
            "p": self.patch_grid,
            "d": self.token_dim,
            "seed": self.seed,
            "scale_mode": self.scale_mode,
            "axes": "".join(a.letter for a in mask_to_axes(self.axes_mask)),
            "encoder_id": self.encoder_id.hex(),
            "prng_id": self.prng_id,
        }


def raptor_embed(tensors, matrix, axes=ALL_AXES, volume_id=None):
    """Pool, project and flatten the selected views into one vector.

    `tensors` maps Axis -> TokenTensor; all present tensors must agree on
    patch grid, token dim and encoder.
    """
    mask = axes_to_mask(axes)
    wanted = mask_to_axes(mask)
    by_axis = {Axis(t.axis): t for t in tensors.values()} if isinstance(tensors, dict) else {
        Axis(t.axis): t for t in tensors
    }
    missing = [a.letter for a in wanted if a not in by_axis]
    if missing:
        raise AxisMissing(f"token tensors missing for axes {missing}")
    first = by_axis[wanted[0]]
    p, d = first.patch_grid, first.token_dim
    enc = first.encoder_id
    for a in wanted:
        t = by_axis[a]
        if (t.patch_grid, t.token_dim) != (p, d):
            raise DimMismatch("token tensors disagree on (p, d)")
        if t.encoder_id != enc:
            raise DimMismatch("token tensors come from different encoders")
    if matrix.token_dim != d:
        raise DimMismatch(f"matrix width {matrix.token_dim} != token dim {d}")
    parts = []
    for a in wanted:
        proj = project(mean_pool(by_axis[a]), matrix)  # (K, p²)
        parts.append(np.ascontiguousarray(proj.T).reshape(-1))  # patch-major, then k
    vector = np.concatenate(parts).astype(np.float32)
    vid = volume_id if volume_id is not None else getattr(first, "volume_id", "")
    return Embedding(
        vector=vector,
        volume_id=vid or "",
        n_projections=matrix.n_projections,
        patch_grid=p,
        token_dim=d,
        seed=matrix.seed,
        scale_mode=matrix.scale_mode,
        axes_mask=mask,
        encoder_id=enc,
    )


# ---------------------------------------------------------------------------
# PCA baseline


@dataclass
class PcaModel:
    """Principal axes of one vector population."""

    mean: np.ndarray            # (d,)
    components: np.ndarray      # (k, d) rows = axes, descending variance
    explained_variance: np.ndarray  # (k,)
    total_variance: float

    @property
    def explained_variance_ratio(self):
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, scores):
        return scores @ self.components + self.mean


def fit_pca(x, n_components):
    """Top principal components via eigendecomposition of the covariance."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if n < n_components:
        raise InsufficientSamples(f"{n} samples < {n_components} components")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_components]
    return PcaModel(
        mean=mean,
        components=eigvecs[:, order].T,
        explained_variance=np.maximum(eigvals[order], 0.0),
        total_variance=float(np.maximum(eigvals, 0.0).sum()),
    )


@dataclass
class PcaBaseline:
    """Per-patch PCA reduction of pooled tokens, mirroring embedding layout."""

    embeddings: np.ndarray        # (N, K·p²) patch-major, then component
    models: list
    patch_grid: int

    def reconstruct(self):
        n, _ = self.embeddings.shape
        p2 = len(self.models)
        k = self.embeddings.shape[1] // p2
        d = self.models[0].mean.shape[0]
        out = np.empty((n, p2, d), dtype=np.float64)
        scores = self.embeddings.reshape(n, p2, k)
        for q, model in enumerate(self.models):
            out[:, q, :] = model.inverse_transform(scores[:, q, :])
        return out


def pca_reduce(pooled_set, n_components):
    """Fit per-patch-position PCA over N pooled grids and project them."""
    if not pooled_set:
        raise InsufficientSamples("empty pooled set")
    stack = np.stack(
        [p.values if isinstance(p, PooledTokens) else np.asarray(p) for p in pooled_set]
    ).astype(np.float64)
    n, p2, d = stack.shape
    if n < n_components:
        raise InsufficientSamples(f"{n} samples < {n_components} components")
    models = []
    out = np.empty((n, p2, n_components), dtype=np.float64)
    for q in range(p2):
        model = fit_pca(stack[:, q, :], n_components)
        models.append(model)
        out[:, q, :] = model.transform(stack[:, q, :])
    p = int(round(p2 ** 0.5))
    return PcaBaseline(embeddings=out.reshape(n, p2 * n_components), models=models, patch_grid=p)


# ---------------------------------------------------------------------------
# Timing


def bench_embed(extents, k_values, n_volumes, token_dim=256, patch_grid=16, seed=0):
    """Wall-clock the encode / pool / project stages per configuration.

    The patch grid is held constant across extents (patch size scales with
    the volume), matching how the pipeline treats the encoder geometry as
    fixed while the number of slices grows.
    Returns rows of dicts with keys D, K, N, encode_ms, pool_ms,
    project_ms, total_ms.
    """
    from .encoders import EncoderSpec, encode_stack
    from .simlab import synthetic_phantom
    from .volumes import slice_stack

    rows = []
    for extent in extents:
        if extent % patch_grid != 0:
            raise ValueError(f"extent {extent} not divisible by patch grid {patch_grid}")
        spec = EncoderSpec(
            patch_size=extent // patch_grid, token_dim=token_dim, seed=seed
        )
        volumes = [
            synthetic_phantom(rng.derive_seed(seed, 101, i), extent)
            for i in range(n_volumes)
        ]
        t0 = time.perf_counter()
        tensors = [
            {a: encode_stack(spec, slice_stack(v, a)) for a in ALL_AXES} for v in volumes
        ]
        t_encode = time.perf_counter() - t0

        t0 = time.perf_counter()
        pooled = [{a: mean_pool(t[a]) for a in ALL_AXES} for t in tensors]
        t_pool = time.perf_counter() - t0

        for k in k_values:
            matrix = gen_projection(k, token_dim, seed)
            t0 = time.perf_counter()
            for per_axis in pooled:
                for a in ALL_AXES:
                    project(per_axis[a], matrix)
            t_project = time.perf_counter() - t0
            rows.append(
                {
                    "D": extent,
                    "K": k,
                    "N": n_volumes,
                    "encode_ms": 1000.0 * t_encode,
                    "pool_ms": 1000.0 * t_pool,
                    "project_ms": 1000.0 * t_project,
                    "total_ms": 1000.0 * (t_encode + t_pool + t_project),
                }
            )
    return rows


def write_bench_csv(rows, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["D", "K", "N", "encode_ms", "pool_ms", "project_ms", "total_ms"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return path
