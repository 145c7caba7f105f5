"""REMB container round trips, negatives, and the footprint arithmetic."""

import numpy as np
import pytest

from raptor import rng
from raptor.errors import (
    DuplicateId,
    HeaderInconsistent,
    MagicMismatch,
    UnsupportedVersion,
)
from raptor.simlab import synthetic_phantom
from raptor.store import (
    EmbeddingSet,
    footprint_ratio,
    merge_embeddings,
    read_embeddings,
    read_labels_csv,
    read_row,
    write_embeddings,
    write_labels_csv,
)
from raptor.volumes import Volume, save_volume


def make_set(seed=0, count=4, k=3, p=2, axes_mask=0b111, ids=None):
    row_len = bin(axes_mask).count("1") * k * p * p
    rows = rng.gaussian(seed, count * row_len).reshape(count, row_len).astype(np.float32)
    return EmbeddingSet(
        n_projections=k,
        patch_grid=p,
        token_dim=16,
        seed=seed,
        scale_mode="invsqrtk",
        axes_mask=axes_mask,
        encoder_id=bytes(range(32)),
        ids=ids if ids is not None else [f"vol-{i}" for i in range(count)],
        rows=rows,
    )


class TestRembIO:
    def test_empty_set_is_header_plus_sentinel(self, tmp_path):
        empty = make_set(count=0, ids=[])
        path = tmp_path / "e.remb"
        n_bytes = write_embeddings(empty, path)
        assert n_bytes == 64 + 2
        assert path.stat().st_size == 66

    def test_byte_accounting(self, tmp_path):
        emb_set = make_set(count=3)
        path = tmp_path / "s.remb"
        n_bytes = write_embeddings(emb_set, path)
        id_table = sum(2 + len(v) for v in emb_set.ids) + 2
        assert n_bytes == 64 + id_table + 3 * emb_set.row_length * 4

    def test_round_trip_20_random_sets(self, tmp_path):
        for i in range(20):
            original = make_set(seed=i, count=1 + i % 5, k=2 + i % 4,
                                axes_mask=(1, 3, 5, 7)[i % 4])
            path = tmp_path / f"{i}.remb"
            write_embeddings(original, path)
            back = read_embeddings(path)
            assert back.ids == original.ids
            assert back.seed == original.seed
            assert back.scale_mode == original.scale_mode
            assert back.axes_mask == original.axes_mask
            assert back.encoder_id == original.encoder_id
            np.testing.assert_array_equal(back.rows, original.rows)

    def test_magic_flip_detected(self, tmp_path):
        path = tmp_path / "m.remb"
        write_embeddings(make_set(), path)
        data = bytearray(path.read_bytes())
        data[1] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(MagicMismatch):
            read_embeddings(path)

    def test_header_byte_flip_detected(self, tmp_path):
        path = tmp_path / "h.remb"
        write_embeddings(make_set(), path)
        data = bytearray(path.read_bytes())
        data[16] ^= 0xFF  # count field
        path.write_bytes(bytes(data))
        with pytest.raises(HeaderInconsistent):
            read_embeddings(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v.remb"
        write_embeddings(make_set(), path)
        data = bytearray(path.read_bytes())
        data[4] = 2
        path.write_bytes(bytes(data))
        with pytest.raises(UnsupportedVersion):
            read_embeddings(path)

    def test_duplicate_ids_rejected_on_write(self, tmp_path):
        bad = make_set(ids=["a", "a", "b", "c"])
        with pytest.raises(DuplicateId):
            write_embeddings(bad, tmp_path / "d.remb")

    def test_random_access_equals_sequential(self, tmp_path):
        emb_set = make_set(count=6, seed=3)
        path = tmp_path / "r.remb"
        write_embeddings(emb_set, path)
        full = read_embeddings(path)
        for i in (0, 3, 5):
            vid, row = read_row(path, i)
            assert vid == full.ids[i]
            np.testing.assert_array_equal(row, full.rows[i])

    def test_merge_counts(self, tmp_path):
        a = make_set(count=3, ids=["a1", "a2", "a3"])
        b = make_set(count=2, ids=["b1", "b2"])
        merged = merge_embeddings(a, b)
        path = tmp_path / "m.remb"
        write_embeddings(merged, path)
        assert read_embeddings(path).count == 5

    def test_merge_requires_matching_provenance(self):
        a = make_set(k=3)
        b = make_set(k=4, ids=["x1", "x2", "x3", "x4"])
        with pytest.raises(HeaderInconsistent):
            merge_embeddings(a, b)


class TestFootprint:
    def test_k_ratio_arithmetic(self, tmp_path):
        vol = synthetic_phantom(1, 24)
        path = tmp_path / "v.rvol"
        save_volume(vol, path)
        row_k10 = np.zeros(10 * 3 * 256, dtype=np.float32)
        row_k100 = np.zeros(100 * 3 * 256, dtype=np.float32)
        r10 = footprint_ratio(path, row_k10)
        r100 = footprint_ratio(path, row_k100)
        assert r100 == pytest.approx(10 * r10, rel=1e-12)

    def test_noise_volume_compresses_worse_than_phantom(self, tmp_path):
        extent = 48
        phantom = synthetic_phantom(2, extent)
        noise_vals = (rng.uniform(3, extent**3) * 255).reshape(extent, extent, extent)
        noise = Volume(id="n", voxels=noise_vals.astype(np.float32))
        p_path, n_path = tmp_path / "p.rvol", tmp_path / "n.rvol"
        save_volume(Volume(id="p", voxels=phantom.voxels * 255), p_path, dtype="u8")
        save_volume(noise, n_path, dtype="u8")
        row = np.zeros(7680, dtype=np.float32)
        assert footprint_ratio(n_path, row) < footprint_ratio(p_path, row)


class TestLabelsCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "labels.csv"
        ids = ["a", "b", "c"]
        values = np.array([[0.0], [1.0], [2.5]])
        write_labels_csv(path, ids, values)
        back_ids, back_values, columns = read_labels_csv(path)
        assert back_ids == ids
        assert columns == ["label"]
        np.testing.assert_array_equal(back_values, values)

    def test_multi_target(self, tmp_path):
        path = tmp_path / "t.csv"
        write_labels_csv(path, ["x"], np.array([[1.5, 2.5]]), columns=("t1", "t2"))
        _, values, columns = read_labels_csv(path)
        assert columns == ["t1", "t2"]
        np.testing.assert_array_equal(values, [[1.5, 2.5]])

    def test_requires_id_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("name,label\na,1\n")
        with pytest.raises(HeaderInconsistent):
            read_labels_csv(path)
