"""The compiled kernels and the pure fallback must agree bit for bit."""

import numpy as np
import pytest

from raptor import _pure, backend

ext = pytest.importorskip("raptor._kernels")


def test_mix64_blocks_equal():
    for seed, start, n in [(0, 0, 1), (12345, 7, 4096), (2**63, 2**40, 1000)]:
        assert np.array_equal(
            _pure.mix64_block(seed, start, n), ext.mix64_block(seed, start, n)
        )


def test_resample_equal_bitwise():
    rng = np.random.default_rng(5)
    src = rng.random((19, 19, 19)).astype(np.float32)
    for target in (2, 7, 19, 40):
        a = _pure.resample_trilinear(src, target)
        b = ext.resample_trilinear(src, target)
        assert np.array_equal(a, b), f"target={target}"


def test_mean_pool_equal_bitwise():
    rng = np.random.default_rng(6)
    tokens = (rng.random((23, 9, 17)) * 4 - 2).astype(np.float32)
    assert np.array_equal(_pure.mean_pool_seq(tokens), ext.mean_pool_seq(tokens))


def test_set_backend_round_trip():
    start = backend.active_backend()
    other = "pure" if start == "ext" else "ext"
    previous = backend.set_backend(other)
    assert previous == start
    assert backend.active_backend() == other
    backend.set_backend(start)
    assert backend.active_backend() == start


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        backend.set_backend("gpu")
