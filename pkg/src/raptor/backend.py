"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-numpy
fallback is always available.  Both produce bit-identical results, so the
choice only affects speed.  Selection can be forced with the environment
variable RAPTOR_BACKEND=pure|ext or at runtime via `set_backend`.
"""

import os

from . import _pure

try:
    from . import _kernels as _ext
except ImportError:
    _ext = None

HAVE_EXT = _ext is not None

_BACKENDS = {"pure": _pure}
if HAVE_EXT:
    _BACKENDS["ext"] = _ext

_env = os.environ.get("RAPTOR_BACKEND", "auto")
if _env == "ext" and not HAVE_EXT:
    raise ImportError("RAPTOR_BACKEND=ext but the compiled kernels are not built")
_active = _BACKENDS.get(_env, _ext if HAVE_EXT else _pure)


def active_backend():
    """Name of the backend currently answering kernel calls."""
    return "ext" if _active is _ext else "pure"


def set_backend(name):
    """Switch kernels to `name` ("pure"/"ext"); returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (built: {sorted(_BACKENDS)})")
    previous = active_backend()
    _active = _BACKENDS[name]
    return previous


def mix64_block(seed, start, n):
    return _active.mix64_block(seed, start, n)


def resample_trilinear(src, target):
    return _active.resample_trilinear(src, target)


def mean_pool_seq(tokens):
    return _active.mean_pool_seq(tokens)
