"""Command-line interface: determinism, evaluation wiring, exit codes."""

import json

import numpy as np
import pytest

from raptor import rng
from raptor.cli import main
from raptor.simlab import SimSpec, make_location_task, save_dataset
from raptor.store import (
    EmbeddingSet,
    read_embeddings,
    write_embeddings,
    write_labels_csv,
)


@pytest.fixture(scope="module")
def location_dataset(tmp_path_factory):
    """Small location task saved as an RVOL directory plus labels CSV."""
    root = tmp_path_factory.mktemp("dataset")
    spec = SimSpec(
        task="location", resolution_px=16, digit=1, seed=5, n_samples=80,
        host_extent=32, digit_px=16, intensity=1.0,
        host_family_weight=0.0, host_amp_range=(0.3, 0.9),
    )
    dataset = make_location_task(spec)
    labels_path = save_dataset(dataset, root)
    return root, labels_path


EMBED_FLAGS = [
    "--encoder", "synthetic", "--k", "16", "--seed", "3",
    "--resample", "32", "--patch", "8", "--token-dim", "64",
]


class TestEmbedCommand:
    def test_rerun_is_byte_identical(self, location_dataset, tmp_path):
        root, _ = location_dataset
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            code = main(["embed", "--input", str(root), "--out", str(out), *EMBED_FLAGS])
            assert code == 0
        assert (out_a / "embeddings.remb").read_bytes() == (
            out_b / "embeddings.remb"
        ).read_bytes()

    def test_thread_count_invariant(self, location_dataset, tmp_path):
        root, _ = location_dataset
        out_a, out_b = tmp_path / "t1", tmp_path / "t4"
        main(["embed", "--input", str(root), "--out", str(out_a), "--threads", "1", *EMBED_FLAGS])
        main(["embed", "--input", str(root), "--out", str(out_b), "--threads", "4", *EMBED_FLAGS])
        assert (out_a / "embeddings.remb").read_bytes() == (
            out_b / "embeddings.remb"
        ).read_bytes()

    def test_single_axis_row_length(self, location_dataset, tmp_path):
        root, _ = location_dataset
        out = tmp_path / "ax"
        main(["embed", "--input", str(root), "--out", str(out), "--axes", "a", *EMBED_FLAGS])
        emb_set = read_embeddings(out / "embeddings.remb")
        assert emb_set.row_length == 16 * 16  # K · p²

    def test_run_config_written(self, location_dataset, tmp_path):
        root, _ = location_dataset
        out = tmp_path / "cfg"
        main(["embed", "--input", str(root), "--out", str(out), *EMBED_FLAGS])
        config = json.loads((out / "run_config.json").read_text())
        assert config["k"] == 16 and config["command"] == "embed"


class TestEvalCommand:
    def _embed(self, location_dataset, tmp_path):
        root, labels_path = location_dataset
        out = tmp_path / "emb"
        main(["embed", "--input", str(root), "--out", str(out), *EMBED_FLAGS])
        return out / "embeddings.remb", labels_path

    def test_separable_task_high_auc(self, location_dataset, tmp_path):
        emb_path, labels_path = self._embed(location_dataset, tmp_path)
        out = tmp_path / "eval"
        code = main([
            "eval", "--embeddings", str(emb_path), "--labels", str(labels_path),
            "--task", "cls", "--out", str(out),
        ])
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["auroc_macro"] >= 0.95

    def test_shuffled_labels_near_chance(self, location_dataset, tmp_path):
        emb_path, labels_path = self._embed(location_dataset, tmp_path)
        emb_set = read_embeddings(emb_path)
        perm = rng.permutation(13, emb_set.count)
        import csv

        with open(labels_path) as fh:
            rows = list(csv.reader(fh))[1:]
        shuffled = tmp_path / "shuffled.csv"
        write_labels_csv(
            shuffled, [r[0] for r in rows],
            np.array([[float(rows[p][1])] for p in perm]),
        )
        out = tmp_path / "eval-null"
        main(["eval", "--embeddings", str(emb_path), "--labels", str(shuffled),
              "--task", "cls", "--out", str(out)])
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.4 <= metrics["auroc_macro"] <= 0.6

    def test_regression_linear_targets(self, tmp_path):
        n, dim = 400, 8
        rows = rng.gaussian(31, n * dim).reshape(n, dim).astype(np.float32)
        emb_set = EmbeddingSet(
            n_projections=2, patch_grid=1, token_dim=8, seed=0,
            scale_mode="invsqrtk", axes_mask=0b111, encoder_id=bytes(32),
            ids=[f"r{i}" for i in range(n)],
            rows=rows.reshape(n, -1)[:, : 3 * 2],
        )
        x = emb_set.rows.astype(np.float64)
        w = rng.gaussian(32, x.shape[1] * 2).reshape(x.shape[1], 2)
        targets = x @ w
        emb_path = tmp_path / "reg.remb"
        write_embeddings(emb_set, emb_path)
        labels_path = tmp_path / "targets.csv"
        write_labels_csv(labels_path, emb_set.ids, targets, columns=("t1", "t2"))
        out = tmp_path / "eval-reg"
        code = main(["eval", "--embeddings", str(emb_path), "--labels", str(labels_path),
                     "--task", "reg", "--out", str(out)])
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["r2_mean"] >= 0.99

    def test_id_mismatch_is_reported(self, location_dataset, tmp_path):
        emb_path, _ = self._embed(location_dataset, tmp_path)
        bad_labels = tmp_path / "bad.csv"
        write_labels_csv(bad_labels, ["nope"], np.array([[1.0]]))
        code = main(["eval", "--embeddings", str(emb_path), "--labels", str(bad_labels),
                     "--task", "cls", "--out", str(tmp_path / "x")])
        assert code == 2


class TestScarcityCommand:
    def test_curve_csv(self, location_dataset, tmp_path):
        root, labels_path = location_dataset
        emb_out = tmp_path / "emb"
        main(["embed", "--input", str(root), "--out", str(emb_out), *EMBED_FLAGS])
        out = tmp_path / "sc"
        code = main([
            "scarcity", "--embeddings", str(emb_out / "embeddings.remb"),
            "--labels", str(labels_path), "--sizes", "10,30,48",
            "--repeats", "3", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "scarcity.csv").read_text().strip().splitlines()
        assert lines[0] == "size,n_fits,median_auc,lo95,hi95"
        assert len(lines) == 4


class TestVerifyCommand:
    def test_fast_suites_pass(self, tmp_path):
        for suite in ("alpha", "overlap"):
            code = main(["verify", "--suite", suite, "--out", str(tmp_path / suite)])
            assert code == 0
            results = json.loads((tmp_path / suite / "verify.json").read_text())
            assert results[0]["passed"] is True


class TestBenchCommand:
    def test_csv_columns(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["bench", "--d-list", "16,32", "--k-list", "4", "--n", "1",
                     "--token-dim", "32", "--patch-grid", "4", "--out", str(out)])
        assert code == 0
        header = (out / "bench.csv").read_text().splitlines()[0]
        assert header == "D,K,N,encode_ms,pool_ms,project_ms,total_ms"

    def test_backend_comparison(self, tmp_path):
        pytest.importorskip("raptor._kernels")
        out = tmp_path / "bench2"
        code = main(["bench", "--d-list", "16", "--k-list", "4", "--n", "1",
                     "--token-dim", "32", "--patch-grid", "4",
                     "--backend", "both", "--out", str(out)])
        assert code == 0
        lines = (out / "bench_backends.csv").read_text().strip().splitlines()
        backends = {line.split(",")[0] for line in lines[1:]}
        assert backends == {"pure", "ext"}


class TestSimulateCommand:
    def test_smoke(self, tmp_path):
        out = tmp_path / "sim"
        code = main(["simulate", "--task", "size", "--res", "16", "--n", "12",
                     "--k", "8", "--out", str(out)])
        assert code == 0
        lines = (out / "simulate.csv").read_text().strip().splitlines()
        assert lines[0] == "task,resolution_px,auc,acc,n"
        assert len(lines) == 2


class TestStudyCommands:
    def test_kstudy_smoke(self, tmp_path):
        out = tmp_path / "ks"
        code = main(["kstudy", "--k-list", "2,8", "--seeds", "2", "--n", "60",
                     "--out", str(out)])
        assert code == 0
        lines = (out / "kstudy.csv").read_text().strip().splitlines()
        assert lines[0] == "K,seed,auc,std"
        assert len(lines) == 5

    def test_viewstudy_smoke(self, tmp_path):
        out = tmp_path / "vs"
        code = main(["viewstudy", "--k", "8", "--n", "60", "--out", str(out)])
        assert code == 0
        lines = (out / "viewstudy.csv").read_text().strip().splitlines()
        assert len(lines) == 8  # header + 7 subsets
