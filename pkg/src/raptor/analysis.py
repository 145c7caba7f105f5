"""Empirical checks on the reduction's geometry: pairwise distance
distortion under projection, slice-difference alignment profiles, the
raw-vs-reduced distance sandwich, cluster separability, and explained
variance overlap between vector populations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import EmptyCluster, InsufficientSamples, ShapeMismatch
from .reduction import SCALE_INVSQRTK, fit_pca, gen_projection

_NORM_FLOOR = 1e-12


@dataclass
class DistortionReport:
    """Aggregate pairwise-distortion counts over one or more seeds."""

    n_points: int
    token_dim: int
    n_projections: int
    eps: float
    pair_count: int
    violations: int
    degenerate_pairs: int
    max_observed_distortion: float
    seed_count: int

    @property
    def violation_fraction(self):
        return self.violations / self.pair_count if self.pair_count else 0.0

    def to_json(self):
        return json.dumps(asdict(self))


def jl_check(points, n_projections, eps, seeds, matrix_factory=None):
    """Count pairs whose squared-distance ratio leaves [1-eps, 1+eps].

    One projection per seed; duplicate points are skipped and counted
    separately.  `matrix_factory(seed)` is a test hook.
    """
    x = np.asarray(points, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise InsufficientSamples("need at least two points")
    iu = np.triu_indices(n, k=1)
    sq = np.square(x).sum(axis=1)
    orig = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    orig = np.maximum(orig[iu], 0.0)
    dup = orig <= 0.0
    live = ~dup

    pair_count = 0
    violations = 0
    max_dist = 0.0
    for seed in seeds:
        if matrix_factory is not None:
            matrix = matrix_factory(seed)
        else:
            matrix = gen_projection(n_projections, d, seed, SCALE_INVSQRTK)
        y = x @ matrix.entries.astype(np.float64).T
        sqy = np.square(y).sum(axis=1)
        proj = sqy[:, None] + sqy[None, :] - 2.0 * (y @ y.T)
        proj = np.maximum(proj[iu], 0.0)
        ratio = proj[live] / orig[live]
        pair_count += int(live.sum())
        violations += int(((ratio < 1.0 - eps) | (ratio > 1.0 + eps)).sum())
        if ratio.size:
            max_dist = max(max_dist, float(np.abs(ratio - 1.0).max()))
    return DistortionReport(
        n_points=n,
        token_dim=d,
        n_projections=n_projections,
        eps=eps,
        pair_count=pair_count,
        violations=violations,
        degenerate_pairs=int(dup.sum()) * len(seeds),
        max_observed_distortion=max_dist,
        seed_count=len(seeds),
    )


def projection_length_ratios(vector, n_projections, eps, seeds):
    """‖R v‖²/‖v‖² across seeds for a single vector (unit-expectation mode)."""
    v = np.asarray(vector, dtype=np.float64)
    norm_sq = float(v @ v)
    if norm_sq == 0.0:
        raise ValueError("vector must be nonzero")
    ratios = np.empty(len(seeds), dtype=np.float64)
    for i, seed in enumerate(seeds):
        matrix = gen_projection(n_projections, v.shape[0], seed, SCALE_INVSQRTK)
        y = matrix.entries.astype(np.float64) @ v
        ratios[i] = (y @ y) / norm_sq
    return ratios


@dataclass
class AlphaProfile:
    """Alignment of each slice difference with the running partial sum."""

    axis: int
    alphas: np.ndarray  # length D-1, entries in [-1, 1]; undefined slots are 0
    alpha_min: float
    q05: float
    zero_count: int


def _slice_deltas(tensor_a, tensor_b):
    a = tensor_a.values
    b = tensor_b.values
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if tensor_a.axis != tensor_b.axis:
        raise ShapeMismatch("token tensors observe different axes")
    n = a.shape[0]
    return (a.reshape(n, -1).astype(np.float64) - b.reshape(n, -1).astype(np.float64))


def alpha_profile(tensor_a, tensor_b):
    """Cosine of each slice difference against the sum of the earlier ones.

    Slot j (j >= 2, 1-indexed) is cos(delta_j, sum_{k<j} delta_k); slots
    where either norm underflows are recorded as 0.
    """
    deltas = _slice_deltas(tensor_a, tensor_b)
    n = deltas.shape[0]
    partial = np.cumsum(deltas, axis=0)
    alphas = np.zeros(n - 1, dtype=np.float64)
    zero_count = 0
    for j in range(1, n):
        d_j = deltas[j]
        s_prev = partial[j - 1]
        nd = np.linalg.norm(d_j)
        ns = np.linalg.norm(s_prev)
        if nd < _NORM_FLOOR or ns < _NORM_FLOOR:
            zero_count += 1
            continue
        alphas[j - 1] = np.clip(float(d_j @ s_prev) / (nd * ns), -1.0, 1.0)
    return AlphaProfile(
        axis=int(tensor_a.axis),
        alphas=alphas,
        alpha_min=float(alphas.min()) if alphas.size else 0.0,
        q05=float(np.quantile(alphas, 0.05)) if alphas.size else 0.0,
        zero_count=zero_count,
    )


def block_project(matrix, flat):
    """Apply the K×d matrix patch-blockwise to a flattened (p²·d,) vector."""
    d = matrix.token_dim
    if flat.size % d != 0:
        raise ShapeMismatch(f"vector length {flat.size} not a multiple of {d}")
    grid = flat.reshape(-1, d)
    return (grid @ matrix.entries.astype(np.float64).T).reshape(-1)


def distance_pair(tensor_a, tensor_b, matrix):
    """Distances of a tensor pair: raw slice space vs reduced space.

    raw: sqrt of the summed squared slice differences (Frobenius);
    reduced: norm of the projected summed difference, divided by the
    slice count.
    """
    deltas = _slice_deltas(tensor_a, tensor_b)
    n = deltas.shape[0]
    d_raw = float(np.sqrt(np.square(deltas).sum()))
    total = deltas.sum(axis=0)
    d_red = float(np.linalg.norm(block_project(matrix, total))) / n
    return d_raw, d_red


@dataclass
class BoundReport:
    """Evaluation of the two-sided distance sandwich for one tensor pair."""

    d_raw: float
    d_raptor: float
    alpha_min: float
    eps: float
    lower: float
    upper: float
    lower_applicable: bool
    holds_lower: bool
    holds_upper: bool

    def to_json(self):
        return json.dumps(asdict(self))


def bound_check(tensor_a, tensor_b, matrix, eps):
    """Check lower/upper distance bounds; the lower one needs alignment > 0."""
    profile = alpha_profile(tensor_a, tensor_b)
    d_raw, d_red = distance_pair(tensor_a, tensor_b, matrix)
    n = tensor_a.values.shape[0]
    lower = (1.0 - eps) * profile.alpha_min * d_raw / n
    upper = (1.0 + eps) * d_raw / np.sqrt(n)
    applicable = profile.alpha_min > 0.0
    return BoundReport(
        d_raw=d_raw,
        d_raptor=d_red,
        alpha_min=profile.alpha_min,
        eps=eps,
        lower=lower,
        upper=upper,
        lower_applicable=applicable,
        holds_lower=bool(d_red >= lower) if applicable else False,
        holds_upper=bool(d_red <= upper),
    )


def separability_check(cluster_a, cluster_b, matrix):
    """Distance between cluster means before and after block projection."""
    a = np.asarray(cluster_a, dtype=np.float64)
    b = np.asarray(cluster_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptyCluster("both clusters need at least one member")
    mu_a = a.reshape(a.shape[0], -1).mean(axis=0)
    mu_b = b.reshape(b.shape[0], -1).mean(axis=0)
    gap = mu_a - mu_b
    raw = float(np.linalg.norm(gap))
    emb = float(np.linalg.norm(block_project(matrix, gap)))
    return {
        "center_dist_raw": raw,
        "center_dist_emb": emb,
        "ratio": emb / raw if raw > 0 else 0.0,
    }


def variance_overlap(reference_set, probe_set, pc_counts):
    """Fraction of each set's variance captured by the reference's top PCs.

    Both sets are centered by the reference mean.  Returns one row per
    component count: (count, reference_fraction, probe_fraction, ratio).
    """
    ref = np.asarray(reference_set, dtype=np.float64)
    probe = np.asarray(probe_set, dtype=np.float64)
    if ref.shape[1] != probe.shape[1]:
        raise ShapeMismatch("sets differ in dimensionality")
    max_pc = max(pc_counts)
    if ref.shape[0] < max_pc:
        raise InsufficientSamples(f"{ref.shape[0]} reference samples < {max_pc} PCs")
    model = fit_pca(ref, max_pc)
    ref_c = ref - model.mean
    probe_c = probe - model.mean
    ref_total = float(np.square(ref_c).sum())
    probe_total = float(np.square(probe_c).sum())
    rows = []
    for count in pc_counts:
        v = model.components[:count]
        ref_frac = float(np.square(ref_c @ v.T).sum()) / ref_total if ref_total else 0.0
        probe_frac = (
            float(np.square(probe_c @ v.T).sum()) / probe_total if probe_total else 0.0
        )
        rows.append(
            {
                "pc_count": int(count),
                "reference_fraction": ref_frac,
                "probe_fraction": probe_frac,
                "ratio": probe_frac / ref_frac if ref_frac > 0 else 0.0,
            }
        )
    return rows
