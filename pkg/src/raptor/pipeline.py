"""End-to-end orchestration: volumes to embeddings to metrics.

Holds the built-in demo task used by the study commands, the evaluation
wiring, and the verification suites behind `raptor verify`.  Everything
is deterministic given the seeds in the configs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .analysis import (
    alpha_profile,
    bound_check,
    jl_check,
    projection_length_ratios,
    variance_overlap,
)
from .encoders import EncoderSpec, TokenTensor, encode_stack, load_tokens
from .errors import AxisMissing, IdMismatch
from .heads import (
    DEFAULT_PENALTY_GRID,
    classification_report,
    fit_logreg,
    make_split,
    regression_report,
)
from .reduction import (
    ALL_AXES,
    Embedding,
    axes_to_mask,
    gen_projection,
    mask_to_axes,
    mean_pool,
    project,
    raptor_embed,
)
from .simlab import SimSpec, make_task, synthetic_phantom
from .volumes import Axis, load_volume, normalize, resample, slice_stack


@dataclass(frozen=True)
class PipelineConfig:
    """How a raw volume becomes token tensors.

    `normalize_input` rescales each volume to [0, 1] before encoding;
    turn it off for data that is already unit-scaled, since a per-volume
    min-max would couple global contrast to the brightest structure.
    """

    extent: int = 256              # cube size fed to the encoder
    patch_size: int = 16
    token_dim: int = 1024
    encoder_seed: int = 0
    normalize_input: bool = True

    @property
    def encoder_spec(self):
        return EncoderSpec(
            patch_size=self.patch_size, token_dim=self.token_dim, seed=self.encoder_seed
        )


def prepare_volume(volume, config):
    """Normalize (optionally) and resample onto the pipeline cube."""
    vol = normalize(volume) if config.normalize_input else volume
    if vol.dims != (config.extent,) * 3:
        vol = resample(vol, config.extent)
    return vol


def tokenize_volume(volume, config, axes=ALL_AXES):
    """Token tensors for the selected axes of one prepared volume."""
    vol = prepare_volume(volume, config)
    spec = config.encoder_spec
    mixing = spec.mixing_matrix()
    return {
        Axis(a): encode_stack(spec, slice_stack(vol, a), mixing=mixing) for a in axes
    }


def pool_volume(volume, config, axes=ALL_AXES):
    """Pooled token grids per axis; the slow part of embedding, cacheable."""
    tensors = tokenize_volume(volume, config, axes)
    return {a: mean_pool(t) for a, t in tensors.items()}


def embed_pooled(pooled, matrix, axes, volume_id, encoder_id):
    """Assemble an embedding from cached pooled views."""
    mask = axes_to_mask(axes)
    wanted = mask_to_axes(mask)
    missing = [a.letter for a in wanted if a not in pooled]
    if missing:
        raise AxisMissing(f"pooled views missing for axes {missing}")
    parts = []
    for a in wanted:
        proj = project(pooled[a], matrix)
        parts.append(np.ascontiguousarray(proj.T).reshape(-1))
    grid = pooled[wanted[0]].values.shape[0]
    return Embedding(
        vector=np.concatenate(parts).astype(np.float32),
        volume_id=volume_id,
        n_projections=matrix.n_projections,
        patch_grid=int(round(grid ** 0.5)),
        token_dim=matrix.token_dim,
        seed=matrix.seed,
        scale_mode=matrix.scale_mode,
        axes_mask=mask,
        encoder_id=encoder_id,
    )


def embed_volumes(volumes, config, matrix, axes=ALL_AXES, threads=1):
    """One embedding per volume; output order follows input order."""
    axes = mask_to_axes(axes_to_mask(axes))

    def work(volume):
        tensors = tokenize_volume(volume, config, axes)
        return raptor_embed(tensors, matrix, axes, volume_id=volume.id)

    if threads <= 1:
        return [work(v) for v in volumes]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, volumes))


def embed_token_dir(token_dir, matrix, axes=ALL_AXES):
    """Embeddings from RTOK files named `<volume id>.<a|c|s>.rtok`."""
    token_dir = Path(token_dir)
    axes = mask_to_axes(axes_to_mask(axes))
    groups = {}
    for path in sorted(token_dir.glob("*.rtok")):
        stem = path.name[: -len(".rtok")]
        vid, _, letter = stem.rpartition(".")
        if not vid:
            raise AxisMissing(f"{path.name}: expected '<id>.<a|c|s>.rtok'")
        groups.setdefault(vid, {})[Axis.from_letter(letter)] = path
    embeddings = []
    for vid in sorted(groups):
        tensors = {a: load_tokens(p) for a, p in groups[vid].items() if a in axes}
        embeddings.append(raptor_embed(tensors, matrix, axes, volume_id=vid))
    return embeddings


def load_volume_dir(input_dir, raw_dims=None):
    """All volumes under a directory (.rvol, .raw, .idx3d), sorted by name."""
    input_dir = Path(input_dir)
    volumes = []
    for path in sorted(input_dir.iterdir()):
        if path.suffix == ".rvol":
            volumes.append(load_volume(path, "rvol"))
        elif path.suffix == ".raw":
            volumes.append(load_volume(path, "raw_u8", dims=raw_dims))
        elif path.suffix == ".idx3d":
            volumes.append(load_volume(path, "idx3d"))
    if not volumes:
        raise FileNotFoundError(f"no volume files under {input_dir}")
    return volumes


# ---------------------------------------------------------------------------
# Evaluation wiring


def align_labels(emb_set, label_ids, label_values):
    """Reorder label rows to the embedding order, by id."""
    index = {vid: i for i, vid in enumerate(label_ids)}
    missing = [vid for vid in emb_set.ids if vid not in index]
    if missing:
        raise IdMismatch(f"labels missing for {len(missing)} ids, e.g. {missing[:3]}")
    order = [index[vid] for vid in emb_set.ids]
    return label_values[order]


def evaluate_classification(rows, labels, split, grid=DEFAULT_PENALTY_GRID):
    model = fit_logreg(rows, labels, grid=grid, split=split)
    probs = model.predict_proba(rows[split.test])
    report = classification_report(probs, labels[split.test], model.classes)
    return report, model


def evaluate_regression(rows, targets, split, config=None):
    from .heads import MlpConfig, fit_mlp

    model = fit_mlp(rows, targets, split, config or MlpConfig())
    pred = model.predict(rows[split.test])
    report = regression_report(pred, np.atleast_2d(targets.T).T[split.test])
    return report, model


def evaluate_multilabel(rows, labels, split, grid=DEFAULT_PENALTY_GRID):
    """One binary head per label column; metrics macro-averaged."""
    labels = np.atleast_2d(labels.T).T
    reports = []
    for col in range(labels.shape[1]):
        y = labels[:, col].astype(int)
        model = fit_logreg(rows, y, grid=grid, split=split)
        probs = model.predict_proba(rows[split.test])[:, list(model.classes).index(1)]
        reports.append(classification_report(probs, y[split.test]))
    from .heads import MetricReport

    return MetricReport(
        auroc_macro=float(np.mean([r.auroc_macro for r in reports])),
        auroc_micro=float(np.mean([r.auroc_micro for r in reports])),
        accuracy=float(np.mean([r.accuracy for r in reports])),
        aupr_macro=float(np.mean([r.aupr_macro for r in reports])),
        aupr_micro=float(np.mean([r.aupr_micro for r in reports])),
    )


# ---------------------------------------------------------------------------
# Built-in demo task (used by kstudy / viewstudy when no dataset is given)


@dataclass(frozen=True)
class DemoTaskConfig:
    """A location-style task whose signal lives in the axial view.

    The digit's two candidate positions differ only along the coronal
    slicing axis, so pooling over that axis erases the class signal:
    axial and sagittal views are informative, the coronal one is not.
    Host extent matches the pipeline extent; resampling would otherwise
    leak position through interpolation phases.
    """

    n_samples: int = 350
    host_extent: int = 48
    separation_px: int = 16
    digit_px: int = 16
    intensity: float = 0.9
    seed: int = 0
    pipeline: PipelineConfig = PipelineConfig(
        extent=48, patch_size=8, token_dim=128, normalize_input=False
    )

    @property
    def sim_spec(self):
        # fully independent hosts: pooling over the coronal axis must
        # erase the class signal, so occlusion differences have to stay
        # sample-random rather than shared across the dataset
        return SimSpec(
            task="location",
            resolution_px=self.separation_px,
            digit=1,
            seed=self.seed,
            n_samples=self.n_samples,
            host_extent=self.host_extent,
            digit_px=self.digit_px,
            intensity=self.intensity,
            host_family_weight=0.0,
            host_amp_range=(0.3, 0.9),
        )


def demo_pooled_views(config=DemoTaskConfig()):
    """Generate the demo dataset and pool every volume once.

    Returns (pooled list, labels, encoder_id).  Studies then project the
    cached views per (K, seed, axes) without re-encoding.
    """
    dataset = make_task(config.sim_spec)
    pooled = [pool_volume(v, config.pipeline) for v in dataset.volumes]
    encoder_id = config.pipeline.encoder_spec.id_hash
    return pooled, dataset.labels, encoder_id


def _split_for_demo(n, seed):
    # 200/50/100 at the default 350 samples
    return make_split(n, ratios=(4 / 7, 1 / 7, 2 / 7), seed=seed)


def study_auc(pooled, labels, matrix, axes, encoder_id, split, grid=DEFAULT_PENALTY_GRID):
    rows = np.stack(
        [
            embed_pooled(p, matrix, axes, f"demo-{i:04d}", encoder_id).vector
            for i, p in enumerate(pooled)
        ]
    ).astype(np.float64)
    model = fit_logreg(rows, labels, grid=grid, split=split)
    probs = model.predict_proba(rows[split.test])
    report = classification_report(probs, labels[split.test], model.classes)
    return report


def run_kstudy(k_values=(1, 5, 10, 100, 150), seeds=(1, 2, 3), config=DemoTaskConfig(),
               pooled=None, labels=None, split_seed=0):
    """Per-K, per-seed test AUC on cached pooled views (Table-style rows)."""
    if pooled is None:
        pooled, labels, encoder_id = demo_pooled_views(config)
    else:
        encoder_id = config.pipeline.encoder_spec.id_hash
    split = _split_for_demo(len(labels), split_seed)
    rows = []
    for k in k_values:
        aucs = []
        for seed in seeds:
            matrix = gen_projection(k, config.pipeline.token_dim, seed)
            report = study_auc(pooled, labels, matrix, ALL_AXES, encoder_id, split)
            aucs.append(report.auroc_macro)
        std = float(np.std(aucs))
        for seed, auc in zip(seeds, aucs):
            rows.append({"K": k, "seed": seed, "auc": auc, "std": std})
    return rows


_VIEW_SUBSETS = (
    (Axis.AXIAL,),
    (Axis.CORONAL,),
    (Axis.SAGITTAL,),
    (Axis.AXIAL, Axis.CORONAL),
    (Axis.CORONAL, Axis.SAGITTAL),
    (Axis.AXIAL, Axis.SAGITTAL),
    (Axis.AXIAL, Axis.CORONAL, Axis.SAGITTAL),
)


def run_viewstudy(k=100, seed=1, config=DemoTaskConfig(), pooled=None, labels=None,
                  split_seed=0):
    """AUC/ACC for each of the seven nonempty axis subsets."""
    if pooled is None:
        pooled, labels, encoder_id = demo_pooled_views(config)
    else:
        encoder_id = config.pipeline.encoder_spec.id_hash
    split = _split_for_demo(len(labels), split_seed)
    matrix = gen_projection(k, config.pipeline.token_dim, seed)
    rows = []
    for axes in _VIEW_SUBSETS:
        report = study_auc(pooled, labels, matrix, axes, encoder_id, split)
        rows.append(
            {
                "views": "".join(a.letter for a in axes),
                "auc": report.auroc_macro,
                "acc": report.accuracy,
            }
        )
    return rows


@dataclass(frozen=True)
class SimRunConfig:
    """End-to-end settings for the insertion benchmarks.

    Hosts share one blob layout per dataset; per-sample texture jitter
    sets the detection floor, so small digits vanish into it while large
    ones stand far above.
    """

    task: str = "size"
    resolutions: tuple = (64, 32, 16, 8)
    n_samples: int = 160
    host_extent: int = 128
    intensity: float = 1.0
    digit: int | None = 1
    seed: int = 0
    k: int = 16
    projection_seed: int = 1
    pipeline: PipelineConfig = PipelineConfig(
        extent=96, patch_size=8, token_dim=128, normalize_input=False
    )


def run_simulation(config=SimRunConfig(), keep_datasets=False):
    """Generate, embed and classify one task per resolution."""
    rows = []
    datasets = []
    matrix = gen_projection(config.k, config.pipeline.token_dim, config.projection_seed)
    for res in config.resolutions:
        spec = SimSpec(
            task=config.task,
            resolution_px=res,
            digit=config.digit,
            seed=rng.derive_seed(config.seed, 11, res),
            n_samples=config.n_samples,
            host_extent=config.host_extent,
            intensity=config.intensity,
            host_family_weight=1.0,
            host_texture=0.08,
            host_amp_range=(0.15, 0.45),
        )
        dataset = make_task(spec)
        embeddings = embed_volumes(dataset.volumes, config.pipeline, matrix)
        rows_x = np.stack([e.vector for e in embeddings]).astype(np.float64)
        split = make_split(len(dataset.labels), seed=config.seed)
        report, _ = evaluate_classification(rows_x, dataset.labels, split)
        rows.append(
            {
                "task": config.task,
                "resolution_px": res,
                "auc": report.auroc_macro,
                "acc": report.accuracy,
                "n": config.n_samples,
            }
        )
        if keep_datasets:
            datasets.append(dataset)
    return (rows, datasets) if keep_datasets else rows


# ---------------------------------------------------------------------------
# Verification suites


def _verify_jl(seed=0):
    n, d, eps = 128, 1024, 0.25
    k = math.ceil(8 * eps ** -2 * math.log(n))
    points = rng.gaussian(rng.derive_seed(seed, 51), n * d).reshape(n, d)
    report = jl_check(points, k, eps, seeds=list(range(10)))
    vector = rng.gaussian(rng.derive_seed(seed, 52), d)
    ratios = projection_length_ratios(vector, 100, eps, seeds=list(range(1000)))
    mean_ratio = float(ratios.mean())
    passed = report.violation_fraction <= 0.01 and 0.95 <= mean_ratio <= 1.05
    return {
        "suite": "jl",
        "passed": bool(passed),
        "violation_fraction": report.violation_fraction,
        "k": k,
        "mean_length_ratio": mean_ratio,
    }


def make_aligned_pair(seed, n_slices, patch_grid, token_dim, jitter=0.15):
    """Token-tensor pair whose slice differences share one direction.

    Differences are positive multiples of a common random vector plus a
    small jitter, keeping every alignment coefficient near one.
    """
    p2 = patch_grid * patch_grid
    width = p2 * token_dim
    base = rng.gaussian(rng.derive_seed(seed, 61), n_slices * width).reshape(
        n_slices, p2, token_dim
    )
    direction = rng.gaussian(rng.derive_seed(seed, 62), width)
    direction /= np.linalg.norm(direction)
    scales = 0.5 + rng.uniform(rng.derive_seed(seed, 63), n_slices)
    noise = rng.gaussian(rng.derive_seed(seed, 64), n_slices * width).reshape(
        n_slices, width
    )
    deltas = scales[:, None] * direction[None, :] + jitter / np.sqrt(width) * noise
    enc = bytes(32)
    a = TokenTensor(axis=Axis.AXIAL, values=base.astype(np.float32), encoder_id=enc)
    b_vals = base - deltas.reshape(n_slices, p2, token_dim)
    b = TokenTensor(axis=Axis.AXIAL, values=b_vals.astype(np.float32), encoder_id=enc)
    return a, b


def alpha_histogram(seed=0, n_volumes=6, config=None):
    """Alignment coefficients for every volume pair of a small demo set.

    Returns plot-ready rows (axis letter, pair id, slice slot, alpha).
    """
    config = config or PipelineConfig(
        extent=32, patch_size=8, token_dim=64, normalize_input=False
    )
    volumes = [
        synthetic_phantom(rng.derive_seed(seed, 55, i), config.extent,
                          volume_id=f"hist-{i}")
        for i in range(n_volumes)
    ]
    tensors = [tokenize_volume(v, config) for v in volumes]
    rows = []
    for i in range(n_volumes):
        for j in range(i + 1, n_volumes):
            for axis in ALL_AXES:
                profile = alpha_profile(tensors[i][axis], tensors[j][axis])
                for slot, alpha in enumerate(profile.alphas, start=2):
                    rows.append(
                        {
                            "axis": axis.letter,
                            "pair": f"{i}-{j}",
                            "slice": slot,
                            "alpha": float(alpha),
                        }
                    )
    return rows


def _verify_alpha(seed=0):
    """alpha profile against a direct per-slice reimplementation."""
    worst = 0.0
    for trial in range(20):
        n_slices, p, d = 6, 2, 17
        enc = bytes(32)
        a_vals = rng.gaussian(rng.derive_seed(seed, 71, trial), n_slices * p * p * d)
        b_vals = rng.gaussian(rng.derive_seed(seed, 72, trial), n_slices * p * p * d)
        a = TokenTensor(Axis.AXIAL, a_vals.reshape(n_slices, p * p, d).astype(np.float32), enc)
        b = TokenTensor(Axis.AXIAL, b_vals.reshape(n_slices, p * p, d).astype(np.float32), enc)
        profile = alpha_profile(a, b)
        deltas = [
            (a.values[j].astype(np.float64) - b.values[j].astype(np.float64)).ravel()
            for j in range(n_slices)
        ]
        for j in range(1, n_slices):
            s_prev = np.zeros_like(deltas[0])
            for k in range(j):
                s_prev = s_prev + deltas[k]
            nd = float(np.sqrt(sum(x * x for x in deltas[j])))
            ns = float(np.sqrt(sum(x * x for x in s_prev)))
            expected = 0.0 if nd < 1e-12 or ns < 1e-12 else float(deltas[j] @ s_prev) / (nd * ns)
            expected = min(1.0, max(-1.0, expected))
            worst = max(worst, abs(profile.alphas[j - 1] - expected))
    return {"suite": "alpha", "passed": bool(worst <= 1e-12), "max_abs_error": worst}


def _verify_bounds(seed=0, n_pairs=100, eps=0.3, k=100):
    held = 0
    applicable = 0
    for trial in range(n_pairs):
        a, b = make_aligned_pair(rng.derive_seed(seed, 81, trial), 12, 2, 128)
        matrix = gen_projection(k, 128, rng.derive_seed(seed, 82, trial))
        report = bound_check(a, b, matrix, eps)
        if report.lower_applicable and report.alpha_min >= 0.2:
            applicable += 1
            if report.holds_lower and report.holds_upper:
                held += 1
    passed = applicable >= n_pairs * 0.9 and held >= applicable - 1
    return {
        "suite": "bounds",
        "passed": bool(passed),
        "applicable_pairs": applicable,
        "held": held,
    }


def _verify_overlap(seed=0):
    dim, n = 64, 2000
    decay = 0.94 ** np.arange(dim)
    ref = rng.gaussian(rng.derive_seed(seed, 91), n * dim).reshape(n, dim) * decay
    probe = rng.gaussian(rng.derive_seed(seed, 92), n * dim).reshape(n, dim)
    rows = variance_overlap(ref, probe, (8, 16, 32, 64))
    ratios = [r["ratio"] for r in rows]
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    passed = increasing and ratios[-1] >= 0.99
    return {"suite": "overlap", "passed": bool(passed), "ratios": ratios}


VERIFY_SUITES = {
    "jl": _verify_jl,
    "alpha": _verify_alpha,
    "bounds": _verify_bounds,
    "overlap": _verify_overlap,
}


def run_verify(suites=("jl", "alpha", "bounds", "overlap"), seed=0):
    results = []
    for name in suites:
        if name not in VERIFY_SUITES:
            raise ValueError(f"unknown suite {name!r} (pick from {sorted(VERIFY_SUITES)})")
        results.append(VERIFY_SUITES[name](seed))
    return results
