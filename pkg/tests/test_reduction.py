"""Pooling, projection, embedding assembly and the PCA baseline."""

import numpy as np
import pytest

from raptor import rng
from raptor.encoders import TokenTensor
from raptor.errors import DimMismatch, InsufficientSamples
from raptor.reduction import (
    ALL_AXES,
    PooledTokens,
    axes_to_mask,
    fit_pca,
    gen_projection,
    identity_projection,
    mask_to_axes,
    mean_pool,
    pca_reduce,
    project,
    raptor_embed,
)
from raptor.volumes import Axis

ENC = bytes(32)


def token_tensor(seed, n_slices=7, p=2, d=9, axis=Axis.AXIAL):
    vals = rng.gaussian(seed, n_slices * p * p * d).reshape(n_slices, p * p, d)
    return TokenTensor(axis=axis, values=vals.astype(np.float32), encoder_id=ENC)


class TestMeanPool:
    def test_identical_slices(self):
        grid = rng.gaussian(0, 4 * 5).reshape(4, 5).astype(np.float32)
        tensor = TokenTensor(Axis.AXIAL, np.stack([grid] * 6), ENC)
        np.testing.assert_array_equal(mean_pool(tensor).values, grid)

    def test_two_slices_average(self):
        a = rng.gaussian(1, 20).reshape(4, 5).astype(np.float32)
        b = rng.gaussian(2, 20).reshape(4, 5).astype(np.float32)
        tensor = TokenTensor(Axis.AXIAL, np.stack([a, b]), ENC)
        expected = ((a.astype(np.float64) + b.astype(np.float64)) / 2).astype(np.float32)
        np.testing.assert_array_equal(mean_pool(tensor).values, expected)

    def test_matches_float64_loop_oracle(self):
        tensor = token_tensor(3, n_slices=7)
        acc = np.zeros(tensor.values.shape[1:], dtype=np.float64)
        for j in range(7):
            acc += tensor.values[j]
        np.testing.assert_allclose(
            mean_pool(tensor).values.astype(np.float64), acc / 7, atol=1e-6
        )


class TestGenProjection:
    def test_bit_identical_per_seed(self):
        a = gen_projection(16, 32, seed=5)
        b = gen_projection(16, 32, seed=5)
        assert np.array_equal(a.entries, b.entries)

    def test_unit_mode_moments(self):
        matrix = gen_projection(100, 1024, seed=0, scale_mode="unit")
        flat = matrix.entries.astype(np.float64).ravel()
        assert abs(flat.mean()) < 0.02
        assert 0.98 < flat.std() < 1.02

    def test_invsqrtk_scaling(self):
        unit = gen_projection(25, 16, seed=1, scale_mode="unit")
        scaled = gen_projection(25, 16, seed=1, scale_mode="invsqrtk")
        np.testing.assert_allclose(
            scaled.entries, (unit.entries.astype(np.float64) / 5.0).astype(np.float32),
            atol=2e-7,
        )

    def test_seed_divergence(self):
        a = gen_projection(100, 1024, seed=0)
        b = gen_projection(100, 1024, seed=1)
        assert (a.entries != b.entries).mean() > 0.99


class TestProject:
    def test_identity_hook_transposes(self):
        pooled = PooledTokens(Axis.AXIAL, rng.gaussian(4, 6 * 8).reshape(6, 8).astype(np.float32))
        out = project(pooled, identity_projection(8))
        np.testing.assert_allclose(out, pooled.values.T, atol=1e-7)

    def test_zero_in_zero_out(self):
        pooled = PooledTokens(Axis.AXIAL, np.zeros((4, 8), dtype=np.float32))
        assert not project(pooled, gen_projection(3, 8, 0)).any()

    def test_matches_triple_loop_oracle(self):
        pooled = PooledTokens(Axis.AXIAL, rng.gaussian(5, 4 * 9).reshape(4, 9).astype(np.float32))
        matrix = gen_projection(6, 9, seed=2)
        out = project(pooled, matrix)
        expected = np.zeros((6, 4))
        for k in range(6):
            for q in range(4):
                for c in range(9):
                    expected[k, q] += float(matrix.entries[k, c]) * float(pooled.values[q, c])
        np.testing.assert_allclose(out, expected, rtol=1e-5)

    def test_dim_mismatch(self):
        pooled = PooledTokens(Axis.AXIAL, np.zeros((4, 8), dtype=np.float32))
        with pytest.raises(DimMismatch):
            project(pooled, gen_projection(3, 9, 0))


class TestRaptorEmbed:
    def _tensors(self, d=128, p=2, n_slices=5):
        return {
            axis: token_tensor(rng.derive_seed(7, int(axis)), n_slices, p, d, axis)
            for axis in ALL_AXES
        }

    def test_three_axis_length_k100_p16(self):
        tensors = {
            axis: token_tensor(int(axis), n_slices=2, p=16, d=128, axis=axis)
            for axis in ALL_AXES
        }
        emb = raptor_embed(tensors, gen_projection(100, 128, 0), ALL_AXES)
        assert emb.vector.shape == (76800,)

    def test_three_axis_length_k10_p16(self):
        tensors = {
            axis: token_tensor(int(axis), n_slices=2, p=16, d=128, axis=axis)
            for axis in ALL_AXES
        }
        emb = raptor_embed(tensors, gen_projection(10, 128, 0), ALL_AXES)
        assert emb.vector.shape == (7680,)

    def test_single_axis_is_contiguous_third(self):
        tensors = self._tensors()
        matrix = gen_projection(11, 128, 3)
        full = raptor_embed(tensors, matrix, ALL_AXES)
        third = len(full.vector) // 3
        for i, axis in enumerate(ALL_AXES):
            single = raptor_embed(tensors, matrix, (axis,))
            np.testing.assert_array_equal(
                single.vector, full.vector[i * third : (i + 1) * third]
            )

    def test_flatten_order_patch_major_then_component(self):
        tensors = {Axis.AXIAL: token_tensor(1, 4, 2, 16, Axis.AXIAL)}
        matrix = gen_projection(3, 16, 0)
        emb = raptor_embed(tensors, matrix, (Axis.AXIAL,))
        proj = project(mean_pool(tensors[Axis.AXIAL]), matrix)
        for q in range(4):
            np.testing.assert_array_equal(emb.vector[q * 3 : (q + 1) * 3], proj[:, q])

    def test_scale_covariance(self):
        tensors = self._tensors()
        matrix = gen_projection(5, 128, 4)
        base = raptor_embed(tensors, matrix, ALL_AXES).vector
        doubled = {
            a: TokenTensor(a, t.values * np.float32(2.0), t.encoder_id)
            for a, t in tensors.items()
        }
        np.testing.assert_array_equal(
            raptor_embed(doubled, matrix, ALL_AXES).vector, base * np.float32(2.0)
        )

    def test_commutes_with_per_slice_projection(self):
        # pooling then projecting equals averaging per-slice projections
        tensor = token_tensor(11, n_slices=16, p=4, d=64)
        matrix = gen_projection(12, 64, 5)
        pooled_first = project(mean_pool(tensor), matrix).astype(np.float64)
        per_slice = np.stack(
            [
                matrix.entries.astype(np.float64) @ tensor.values[j].astype(np.float64).T
                for j in range(16)
            ]
        )
        slice_mean = per_slice.mean(axis=0)
        num = np.linalg.norm(pooled_first - slice_mean)
        den = np.linalg.norm(slice_mean)
        assert num / den <= 1e-5

    def test_determinism_across_runs(self):
        tensors = self._tensors()
        matrix = gen_projection(9, 128, 6)
        a = raptor_embed(tensors, matrix, ALL_AXES)
        b = raptor_embed(tensors, matrix, ALL_AXES)
        assert np.array_equal(a.vector, b.vector)

    def test_sub_cubic_size(self):
        # 3·K·p² stays far below D³ for supported settings
        for extent in (64, 128, 256):
            assert 3 * 150 * 16 * 16 < extent**3

    def test_axes_mask_round_trip(self):
        for axes in [(Axis.AXIAL,), (Axis.CORONAL, Axis.SAGITTAL), ALL_AXES]:
            assert mask_to_axes(axes_to_mask(axes)) == tuple(sorted(axes))


class TestPca:
    def test_exact_low_rank_reconstruction(self):
        basis = rng.gaussian(0, 3 * 12).reshape(3, 12)
        coords = rng.gaussian(1, 40 * 3).reshape(40, 3)
        data = coords @ basis
        pooled = [PooledTokens(Axis.AXIAL, row.reshape(1, 12).astype(np.float32)) for row in data]
        baseline = pca_reduce(pooled, 3)
        recon = baseline.reconstruct()[:, 0, :]
        assert np.abs(recon - np.stack([p.values[0] for p in pooled])).max() <= 1e-5

    def test_full_rank_explains_everything(self):
        data = rng.gaussian(2, 30 * 6).reshape(30, 6)
        model = fit_pca(data, 6)
        np.testing.assert_allclose(model.explained_variance_ratio.sum(), 1.0, atol=1e-6)

    def test_anisotropic_major_axis(self):
        # closed form: top component of an axis-stretched cloud
        raw = rng.gaussian(3, 4000 * 2).reshape(4000, 2)
        stretched = raw * np.array([5.0, 0.5])
        angle = np.deg2rad(30.0)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        model = fit_pca(stretched @ rot.T, 1)
        expected = rot @ np.array([1.0, 0.0])
        cosine = abs(float(model.components[0] @ expected))
        assert cosine >= 0.999

    def test_insufficient_samples(self):
        pooled = [PooledTokens(Axis.AXIAL, np.zeros((1, 4), dtype=np.float32))] * 3
        with pytest.raises(InsufficientSamples):
            pca_reduce(pooled, 4)
