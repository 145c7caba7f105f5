"""Train-free embeddings for cubic volumes.

A volume is sliced along its three axes, each slice is mapped to patch
tokens, tokens are mean-pooled over slices, projected with a seeded
Gaussian matrix, and flattened into one compact vector.  The companion
modules verify the distance-preservation properties of that reduction
and evaluate the embeddings with lightweight predictors.
"""

from .backend import HAVE_EXT, active_backend, set_backend
from .encoders import EncoderSpec, TokenTensor, encode_slice, encode_stack, load_tokens, save_tokens
from .reduction import (
    Embedding,
    PooledTokens,
    ProjectionMatrix,
    gen_projection,
    identity_projection,
    mean_pool,
    pca_reduce,
    project,
    raptor_embed,
)
from .store import EmbeddingSet, read_embeddings, write_embeddings
from .volumes import Axis, SliceStack, Volume, load_volume, normalize, resample, save_volume, slice_stack

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "EmbeddingSet",
    "EncoderSpec",
    "Embedding",
    "HAVE_EXT",
    "PooledTokens",
    "ProjectionMatrix",
    "SliceStack",
    "TokenTensor",
    "Volume",
    "active_backend",
    "encode_slice",
    "encode_stack",
    "gen_projection",
    "identity_projection",
    "load_tokens",
    "load_volume",
    "mean_pool",
    "normalize",
    "pca_reduce",
    "project",
    "raptor_embed",
    "read_embeddings",
    "resample",
    "save_tokens",
    "save_volume",
    "set_backend",
    "slice_stack",
    "write_embeddings",
]
