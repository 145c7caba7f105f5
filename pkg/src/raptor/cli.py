"""Batch command-line interface.

Every command is deterministic given its flags, writes its outputs under
--out, and drops a run_config.json recording the exact flags used.
Exit code is 0 only when the command succeeded and all requested checks
passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import backend
from .errors import RaptorError
from .heads import make_split, scarcity_curve
from .pipeline import (
    DemoTaskConfig,
    PipelineConfig,
    SimRunConfig,
    align_labels,
    embed_token_dir,
    embed_volumes,
    evaluate_classification,
    evaluate_multilabel,
    evaluate_regression,
    load_volume_dir,
    run_kstudy,
    run_simulation,
    run_verify,
    run_viewstudy,
)
from .reduction import bench_embed, gen_projection, write_bench_csv
from .simlab import save_dataset
from .store import EmbeddingSet, read_embeddings, read_labels_csv, write_embeddings


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("RAPTOR_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config["backend"] = backend.active_backend()
    (out / "run_config.json").write_text(json.dumps(config, indent=2, default=str) + "\n")
    return out


def _write_csv(path, rows, fieldnames):
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _parse_axes(text):
    return tuple(dict.fromkeys(text.lower()))


def cmd_embed(args):
    out = _outdir(args)
    pipeline = PipelineConfig(
        extent=args.resample,
        patch_size=args.patch,
        token_dim=args.token_dim,
        encoder_seed=args.encoder_seed,
    )
    matrix = gen_projection(args.k, args.token_dim, args.seed, args.scale)
    axes = [a for a in _parse_axes(args.axes)]
    from .volumes import Axis

    axes = [Axis.from_letter(a) for a in axes]
    if args.encoder == "tokens":
        embeddings = embed_token_dir(args.input, matrix, axes)
    else:
        volumes = load_volume_dir(args.input, raw_dims=args.raw_dims)
        embeddings = embed_volumes(
            volumes, pipeline, matrix, axes, threads=_threads(args.threads)
        )
    emb_set = EmbeddingSet.from_embeddings(embeddings)
    target = out / args.filename
    n_bytes = write_embeddings(emb_set, target)
    print(f"wrote {emb_set.count} embeddings of length {emb_set.row_length} "
          f"({n_bytes} bytes) to {target}")
    return 0


def cmd_eval(args):
    out = _outdir(args)
    emb_set = read_embeddings(args.embeddings)
    label_ids, values, columns = read_labels_csv(args.labels)
    aligned = align_labels(emb_set, label_ids, values)
    rows = emb_set.rows.astype(np.float64)
    split = make_split(emb_set.count, seed=args.split_seed)
    grid = tuple(float(g) for g in args.grid.split(","))
    if args.task == "cls":
        report, _ = evaluate_classification(rows, aligned[:, 0].astype(int), split, grid)
    elif args.task == "multilabel":
        report = evaluate_multilabel(rows, aligned.astype(int), split, grid)
    else:
        report, _ = evaluate_regression(rows, aligned, split)
    payload = report.as_dict()
    (out / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n")
    flat = {k: v for k, v in payload.items() if not isinstance(v, list)}
    _write_csv(out / "metrics.csv", [flat], list(flat))
    print(json.dumps(payload, indent=2))
    return 0


def cmd_kstudy(args):
    out = _outdir(args)
    config = DemoTaskConfig(seed=args.seed, n_samples=args.n)
    k_values = tuple(int(k) for k in args.k_list.split(","))
    seeds = tuple(range(1, args.seeds + 1))
    rows = run_kstudy(k_values, seeds, config, split_seed=args.split_seed)
    _write_csv(out / "kstudy.csv", rows, ["K", "seed", "auc", "std"])
    for row in rows:
        print(f"K={row['K']:<4d} seed={row['seed']} auc={row['auc']:.4f} std={row['std']:.4f}")
    return 0


def cmd_viewstudy(args):
    out = _outdir(args)
    config = DemoTaskConfig(seed=args.seed, n_samples=args.n)
    rows = run_viewstudy(args.k, args.projection_seed, config, split_seed=args.split_seed)
    _write_csv(out / "viewstudy.csv", rows, ["views", "auc", "acc"])
    for row in rows:
        print(f"views={row['views']:<3s} auc={row['auc']:.4f} acc={row['acc']:.4f}")
    return 0


def cmd_simulate(args):
    out = _outdir(args)
    resolutions = tuple(int(r) for r in args.res.split(","))
    config = SimRunConfig(
        task=args.task,
        resolutions=resolutions,
        n_samples=args.n,
        seed=args.seed,
        k=args.k,
    )
    rows, datasets = run_simulation(config, keep_datasets=True)
    _write_csv(out / "simulate.csv", rows, ["task", "resolution_px", "auc", "acc", "n"])
    if args.save_volumes:
        for dataset in datasets:
            save_dataset(dataset, out / f"{args.task}_{dataset.spec.resolution_px}px")
    for row in rows:
        print(f"{row['task']} {row['resolution_px']:>3d}px auc={row['auc']:.4f} "
              f"acc={row['acc']:.4f}")
    return 0


def cmd_scarcity(args):
    out = _outdir(args)
    emb_set = read_embeddings(args.embeddings)
    label_ids, values, _ = read_labels_csv(args.labels)
    aligned = align_labels(emb_set, label_ids, values)[:, 0].astype(int)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    rows = scarcity_curve(
        emb_set.rows.astype(np.float64),
        aligned,
        sizes=sizes,
        repeats=args.repeats,
        seed=args.seed,
    )
    _write_csv(out / "scarcity.csv", rows, ["size", "n_fits", "median_auc", "lo95", "hi95"])
    for row in rows:
        print(f"size={row['size']:<4d} median_auc={row['median_auc']:.4f} "
              f"[{row['lo95']:.4f}, {row['hi95']:.4f}]")
    return 0


def cmd_verify(args):
    out = _outdir(args)
    suites = ("jl", "alpha", "bounds", "overlap") if args.suite == "all" else (args.suite,)
    results = run_verify(suites, seed=args.seed)
    (out / "verify.json").write_text(json.dumps(results, indent=2) + "\n")
    if "alpha" in suites:
        from .pipeline import alpha_histogram

        _write_csv(out / "alpha_hist.csv", alpha_histogram(seed=args.seed),
                   ["axis", "pair", "slice", "alpha"])
    all_passed = True
    for result in results:
        status = "PASS" if result["passed"] else "FAIL"
        detail = {k: v for k, v in result.items() if k not in ("suite", "passed")}
        print(f"[{status}] {result['suite']}: {json.dumps(detail)}")
        all_passed &= result["passed"]
    return 0 if all_passed else 1


def cmd_bench(args):
    out = _outdir(args)
    extents = tuple(int(d) for d in args.d_list.split(","))
    k_values = tuple(int(k) for k in args.k_list.split(","))
    backends = [args.backend]
    if args.backend == "both":
        backends = ["pure"] + (["ext"] if backend.HAVE_EXT else [])
    all_rows = {}
    for name in backends:
        previous = backend.set_backend(name) if name != "auto" else None
        try:
            rows = bench_embed(extents, k_values, args.n, token_dim=args.token_dim,
                               patch_grid=args.patch_grid, seed=args.seed)
        finally:
            if previous is not None:
                backend.set_backend(previous)
        all_rows[name if name != "auto" else backend.active_backend()] = rows
    first = next(iter(all_rows.values()))
    write_bench_csv(first, out / "bench.csv")
    if len(all_rows) > 1:
        comparison = []
        for name, rows in all_rows.items():
            for row in rows:
                comparison.append({"backend": name, **row})
        _write_csv(out / "bench_backends.csv", comparison,
                   ["backend", "D", "K", "N", "encode_ms", "pool_ms", "project_ms", "total_ms"])
    for name, rows in all_rows.items():
        for row in rows:
            print(f"[{name}] D={row['D']:<4d} K={row['K']:<4d} "
                  f"encode={row['encode_ms']:.1f}ms pool={row['pool_ms']:.1f}ms "
                  f"project={row['project_ms']:.1f}ms total={row['total_ms']:.1f}ms")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="raptor",
        description="Train-free volumetric embeddings and their evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a directory of volumes or token files")
    p.add_argument("--input", required=True, help="directory of .rvol/.raw/.idx3d or .rtok files")
    p.add_argument("--encoder", choices=("synthetic", "tokens"), default="synthetic")
    p.add_argument("--k", type=int, default=100, help="number of projections")
    p.add_argument("--seed", type=int, default=0, help="projection seed")
    p.add_argument("--encoder-seed", type=int, default=0)
    p.add_argument("--axes", default="acs", help="subset of 'acs'")
    p.add_argument("--scale", choices=("unit", "invsqrtk"), default="invsqrtk")
    p.add_argument("--resample", type=int, default=256, help="pipeline cube extent")
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--token-dim", type=int, default=1024)
    p.add_argument("--raw-dims", type=int, default=None, help="extent for .raw inputs")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--filename", default="embeddings.remb")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="fit heads on stored embeddings and report metrics")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--task", choices=("cls", "reg", "multilabel"), default="cls")
    p.add_argument("--grid", default="0.01,0.1,1.0,10.0,100.0")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kstudy", help="projection-count reliability study")
    p.add_argument("--k-list", default="1,5,10,100,150")
    p.add_argument("--seeds", type=int, default=3, help="projection seeds 1..N")
    p.add_argument("--seed", type=int, default=0, help="demo dataset seed")
    p.add_argument("--n", type=int, default=350, help="demo dataset size")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kstudy)

    p = sub.add_parser("viewstudy", help="axis-subset ablation study")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--projection-seed", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="demo dataset seed")
    p.add_argument("--n", type=int, default=350, help="demo dataset size")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viewstudy)

    p = sub.add_parser("simulate", help="digit insertion benchmarks end to end")
    p.add_argument("--task", choices=("location", "size"), default="size")
    p.add_argument("--res", default="64,32,16,8")
    p.add_argument("--n", type=int, default=160)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-volumes", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scarcity", help="accuracy vs training-set size")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--sizes", default="10,50,100,200,500")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scarcity)

    p = sub.add_parser("verify", help="distance-preservation and smoothness checks")
    p.add_argument("--suite", choices=("jl", "alpha", "bounds", "overlap", "all"),
                   default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="stage timings per configuration")
    p.add_argument("--d-list", default="32,64,128")
    p.add_argument("--k-list", default="100")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--token-dim", type=int, default=256)
    p.add_argument("--patch-grid", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("auto", "pure", "ext", "both"), default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RaptorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
