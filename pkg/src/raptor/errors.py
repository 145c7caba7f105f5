"""Exception hierarchy shared by all raptor modules."""


class RaptorError(Exception):
    """Base class for all toolkit errors."""


class MagicMismatch(RaptorError):
    """File does not start with the expected format signature."""


class UnsupportedVersion(RaptorError):
    """File declares a format version this build cannot read."""


class TruncatedPayload(RaptorError):
    """File holds fewer payload bytes than its header implies."""


class HeaderInconsistent(RaptorError):
    """Header fields disagree with each other or with the payload size."""


class NonFinite(RaptorError):
    """NaN or Inf encountered where finite values are required."""


class NonCubic(RaptorError):
    """Operation requires equal extents along all three axes."""


class ShapeMismatch(RaptorError):
    """Array shapes are incompatible with the requested operation."""


class DimMismatch(RaptorError):
    """Projection matrix width does not match the token dimension."""


class AxisMissing(RaptorError):
    """A requested axis has no token tensor available."""


class InsufficientSamples(RaptorError):
    """Not enough samples for the requested decomposition."""


class EmptyCluster(RaptorError):
    """A cluster with no members cannot have a center."""


class SingleClass(RaptorError):
    """Classification requires at least two classes present."""


class TooFewSamples(RaptorError):
    """Not enough samples to split or subsample as requested."""


class NoPositives(RaptorError):
    """Precision-recall analysis requires at least one positive label."""


class OutOfBounds(RaptorError):
    """Insertion footprint does not fit inside the host volume."""


class IdxParseError(RaptorError):
    """IDX container is malformed."""


class UnknownDigit(RaptorError):
    """Digit class outside 0-9."""


class IoFailure(RaptorError):
    """Underlying file operation failed."""


class DuplicateId(RaptorError):
    """Embedding set contains the same volume id twice."""


class IdMismatch(RaptorError):
    """Label ids do not line up with embedding ids."""
