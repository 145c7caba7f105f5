"""Volume IO, normalization, resampling and slicing."""

import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raptor import rng
from raptor.errors import MagicMismatch, NonCubic, NonFinite, TruncatedPayload
from raptor.volumes import (
    Axis,
    Volume,
    load_volume,
    normalize,
    resample,
    restack,
    save_volume,
    slice_stack,
)


def random_volume(seed, extent=8, volume_id="v"):
    vals = rng.uniform(seed, extent**3).reshape(extent, extent, extent)
    return Volume(id=volume_id, voxels=vals.astype(np.float32))


class TestRvolIO:
    def test_zero_payload(self, tmp_path):
        header = struct.pack("<4sHBB3I", b"RVOL", 1, 0, 0, 28, 28, 28)
        path = tmp_path / "z.rvol"
        path.write_bytes(header + bytes(28**3))
        vol = load_volume(path, "rvol")
        assert vol.dims == (28, 28, 28)
        assert not vol.voxels.any()

    def test_corrupt_magic(self, tmp_path):
        header = struct.pack("<4sHBB3I", b"RVOX", 1, 0, 0, 2, 2, 2)
        path = tmp_path / "bad.rvol"
        path.write_bytes(header + bytes(8))
        with pytest.raises(MagicMismatch):
            load_volume(path, "rvol")

    def test_truncated(self, tmp_path):
        header = struct.pack("<4sHBB3I", b"RVOL", 1, 0, 0, 4, 4, 4)
        path = tmp_path / "short.rvol"
        path.write_bytes(header + bytes(10))
        with pytest.raises(TruncatedPayload):
            load_volume(path, "rvol")

    def test_round_trip_50_random(self, tmp_path):
        for i in range(50):
            vol = random_volume(seed=i, extent=5, volume_id=f"rt{i}")
            path = tmp_path / f"{i}.rvol"
            save_volume(vol, path)
            back = load_volume(path, "rvol", volume_id=vol.id)
            assert np.array_equal(back.voxels, vol.voxels)

    def test_gzip_round_trip(self, tmp_path):
        vol = random_volume(seed=99, extent=6)
        path = tmp_path / "c.rvol"
        save_volume(vol, path, compress=True)
        back = load_volume(path, "rvol")
        assert np.array_equal(back.voxels, vol.voxels)

    def test_corrupt_gzip_payload(self, tmp_path):
        header = struct.pack("<4sHBB3I", b"RVOL", 1, 0, 1, 2, 2, 2)
        path = tmp_path / "gz.rvol"
        path.write_bytes(header + b"\x1f\x8bnot really gzip data")
        with pytest.raises(TruncatedPayload):
            load_volume(path, "rvol")

    def test_nan_payload_rejected(self, tmp_path):
        bad = np.full((2, 2, 2), np.nan, dtype="<f4")
        header = struct.pack("<4sHBB3I", b"RVOL", 1, 1, 0, 2, 2, 2)
        path = tmp_path / "nan.rvol"
        path.write_bytes(header + bad.tobytes())
        with pytest.raises(NonFinite):
            load_volume(path, "rvol")


class TestOtherFormats:
    def test_raw_u8(self, tmp_path):
        data = bytes(range(27))
        path = tmp_path / "cube.raw"
        path.write_bytes(data)
        vol = load_volume(path, "raw_u8", dims=3)
        assert vol.voxels[2, 2, 2] == 26.0

    def test_raw_u8_needs_dims(self, tmp_path):
        path = tmp_path / "cube.raw"
        path.write_bytes(bytes(8))
        with pytest.raises(ValueError):
            load_volume(path, "raw_u8")

    def test_idx3d(self, tmp_path):
        payload = np.arange(8, dtype=np.uint8)
        blob = bytes([0, 0, 0x08, 3]) + struct.pack(">3I", 2, 2, 2) + payload.tobytes()
        path = tmp_path / "v.idx3d"
        path.write_bytes(blob)
        vol = load_volume(path, "idx3d")
        assert vol.voxels[1, 1, 1] == 7.0


class TestNormalize:
    def test_constant_maps_to_zero(self):
        vol = Volume(id="c", voxels=np.full((3, 3, 3), 7.0, dtype=np.float32))
        assert not normalize(vol).voxels.any()

    def test_affine_range(self):
        vals = np.linspace(0, 255, 27, dtype=np.float32).reshape(3, 3, 3)
        out = normalize(Volume(id="a", voxels=vals)).voxels
        np.testing.assert_allclose(out, vals / 255.0, atol=1e-6)

    def test_order_statistics_preserved(self):
        vol = random_volume(3, extent=6)
        out = normalize(vol).voxels
        assert out.min() == 0.0 and out.max() == 1.0
        assert np.array_equal(
            np.argsort(vol.voxels.ravel()), np.argsort(out.ravel())
        )

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32))
    def test_idempotent(self, seed):
        vol = random_volume(seed, extent=4)
        once = normalize(vol)
        twice = normalize(once)
        assert np.array_equal(once.voxels, twice.voxels)


class TestResample:
    def test_identity(self):
        vol = random_volume(11, extent=9)
        out = resample(vol, 9)
        assert np.array_equal(out.voxels, vol.voxels)

    def test_constant_upscale(self):
        vol = Volume(id="c", voxels=np.full((4, 4, 4), 0.25, dtype=np.float32))
        out = resample(vol, 8)
        np.testing.assert_array_equal(out.voxels, np.float32(0.25))

    def test_linear_ramp_28_to_56(self):
        coords = np.arange(28, dtype=np.float32)
        vol = Volume(id="r", voxels=np.broadcast_to(
            coords[:, None, None] / 27.0, (28, 28, 28)).copy())
        out = resample(vol, 56)
        expected = (np.arange(56) * (27.0 / 55.0) / 27.0).astype(np.float64)
        np.testing.assert_allclose(out.voxels[:, 0, 0], expected, atol=1e-5)

    def test_rejects_tiny_target(self):
        with pytest.raises(ValueError):
            resample(random_volume(0, 4), 1)

    def test_rejects_non_cubic(self):
        vol = Volume(id="nc", voxels=np.zeros((2, 3, 4), dtype=np.float32))
        with pytest.raises(NonCubic):
            resample(vol, 8)


class TestSliceStack:
    def test_axial_constant_planes(self):
        idx = np.arange(4, dtype=np.float32)
        vol = Volume(id="x", voxels=np.broadcast_to(
            idx[:, None, None], (4, 4, 4)).copy())
        stack = slice_stack(vol, Axis.AXIAL)
        for j in range(4):
            np.testing.assert_array_equal(stack[j], np.float32(j))

    def test_restack_round_trip_all_axes(self):
        vol = random_volume(21, extent=5)
        for axis in Axis:
            stack = slice_stack(vol, axis)
            back = restack(stack, volume_id=vol.id)
            assert np.array_equal(back.voxels, vol.voxels)

    def test_matches_triple_loop_oracle(self):
        vals = np.arange(64, dtype=np.float32).reshape(4, 4, 4)
        vol = Volume(id="o", voxels=vals)
        for axis in Axis:
            stack = slice_stack(vol, axis)
            for j in range(4):
                expected = np.empty((4, 4), dtype=np.float32)
                for a in range(4):
                    for b in range(4):
                        if axis == Axis.AXIAL:
                            expected[a, b] = vals[j, a, b]
                        elif axis == Axis.CORONAL:
                            expected[a, b] = vals[a, j, b]
                        else:
                            expected[a, b] = vals[a, b, j]
                np.testing.assert_array_equal(stack[j], expected)

    def test_three_stacks_share_value_multiset(self):
        vol = random_volume(31, extent=5)
        sorted_values = [
            np.sort(slice_stack(vol, axis).slices.ravel()) for axis in Axis
        ]
        assert np.array_equal(sorted_values[0], sorted_values[1])
        assert np.array_equal(sorted_values[0], sorted_values[2])

    def test_non_cubic_rejected(self):
        vol = Volume(id="nc", voxels=np.zeros((2, 3, 4), dtype=np.float32))
        with pytest.raises(NonCubic):
            slice_stack(vol, Axis.AXIAL)


class TestVolumeInvariants:
    def test_non_finite_rejected(self):
        bad = np.zeros((2, 2, 2), dtype=np.float32)
        bad[0, 0, 0] = np.inf
        with pytest.raises(NonFinite):
            Volume(id="inf", voxels=bad)

    def test_value_range(self):
        vol = random_volume(41, extent=4)
        lo, hi = vol.value_range
        assert lo == vol.voxels.min() and hi == vol.voxels.max()
