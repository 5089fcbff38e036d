"""
Label processing layer: mix class scores through a label correlation matrix.

The correlation matrix is built once from training-set co-occurrence counts.
The layer combines the classifier scores with a frozen copy of the matrix and
with a trainable copy initialized to the same values.

.. rubric:: Types
.. autosummary::
    ~CooccurrenceCounts
    ~CorrelationMatrix

.. rubric:: Functions
.. autosummary::
    ~apply_label_layer
    ~build_cooccurrence
    ~build_correlation
    ~read_correlation
    ~write_correlation
"""

import dataclasses
import logging
import pathlib
import struct

import numpy as np

from .core import ConfigError
from .core import DimensionError
from .core import shape_text
from .data import DataError
from .data import FormatError
from .numerics import TensorBuffer
from .numerics import add
from .numerics import matmul
from .numerics import scale

logger = logging.getLogger(__name__)

MAGIC = b"LGC1"
NORMALIZATIONS = ("ochiai", "conditional")


@dataclasses.dataclass
class CooccurrenceCounts:
    """
    Symmetric ``C x C`` table of video counts.

    ``counts[i, i]`` is the number of videos labeled ``i``; ``counts[i, j]``
    the number labeled both ``i`` and ``j``.
    """

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        """C."""
        return self.counts.shape[0]

    def diagonal(self) -> np.ndarray:
        """Per-class video counts."""
        return np.diag(self.counts).copy()


@dataclasses.dataclass
class CorrelationMatrix:
    """
    Frozen correlation matrix ``m`` and its trainable copy.

    Only ``trainable`` is ever handed to the optimizer.
    """

    m: TensorBuffer
    trainable: TensorBuffer

    @classmethod
    def from_array(cls, values) -> "CorrelationMatrix":
        """Frozen matrix plus a trainable copy initialized to the same values."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"correlation matrix must be square, received {shape_text(values.shape)}")
        return cls(TensorBuffer(values), TensorBuffer(values, requires_grad=True))

    @property
    def num_classes(self) -> int:
        """C."""
        return self.m.shape[0]


def build_cooccurrence(dataset, num_classes: int = None) -> CooccurrenceCounts:
    """
    Count label pairs over the videos of ``dataset``.

    ``num_classes`` defaults to ``dataset.num_classes``.  A label outside
    ``[0, C)`` raises DataError.
    """
    num_classes = dataset.num_classes if num_classes is None else num_classes
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for video in dataset:
        labels = np.asarray(video.labels, dtype=int)
        if labels.size == 0:
            continue
        if labels.min() < 0 or labels.max() >= num_classes:
            raise DataError(f"{video.video_id!r}: labels {list(labels)!r} outside [0, {num_classes})")
        counts[np.ix_(labels, labels)] += 1
    return CooccurrenceCounts(counts)


def build_correlation(c: CooccurrenceCounts, normalization="ochiai", threshold=0.0) -> CorrelationMatrix:
    """
    Normalize co-occurrence counts into a correlation matrix.

    PARAMETERS

    c : CooccurrenceCounts
        Training-set counts.
    normalization : str
        ``ochiai`` (default): ``n_ij / sqrt(n_ii n_jj)``, symmetric.
        ``conditional``: ``n_ij / n_ii``, the probability of ``j`` given ``i``.
        Entries for unseen classes are zero either way.
    threshold : float
        Entries below this value are set to zero (sparser matrix).
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"Unknown {normalization=!r}; choose from {NORMALIZATIONS}")
    counts = c.counts.astype(float)
    diag = np.diag(counts)
    seen = diag > 0
    m = np.zeros_like(counts)
    if normalization == "ochiai":
        denom = np.sqrt(np.outer(diag, diag))
        both = np.outer(seen, seen)
        m[both] = counts[both] / denom[both]
    else:
        m[seen] = counts[seen] / diag[seen, None]
    m = np.clip(m, 0.0, 1.0)
    if threshold > 0:
        m[m < threshold] = 0.0
    logger.debug("correlation matrix: %d classes, %d nonzero", len(diag), np.count_nonzero(m))
    return CorrelationMatrix.from_array(m)


def apply_label_layer(scores, cm: CorrelationMatrix, alpha=1.0, beta=0.0, gamma=0.0):
    """
    Mix scores through the correlation matrix: ``alpha O + beta m O + gamma m' O``.

    Terms with a zero coefficient are not computed, so ``(1, 0, 0)`` returns
    ``scores`` itself.  No clamping here; the loss clamps its input.
    """
    if scores.shape != (cm.num_classes,):
        raise DimensionError(f"scores {shape_text(scores.shape)} do not match {cm.num_classes} classes")
    out = scores if alpha == 1.0 else scale(scores, alpha)
    if beta != 0.0:
        out = add(out, scale(matmul(cm.m, scores), beta))
    if gamma != 0.0:
        out = add(out, scale(matmul(cm.trainable, scores), gamma))
    return out


def write_correlation(values, path) -> None:
    """Write a ``C x C`` matrix in the LGC1 layout (magic, uint32 C, float64 LE row-major)."""
    values = np.asarray(values.values if isinstance(values, TensorBuffer) else values, dtype="<f8")
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DimensionError(f"correlation matrix must be square, received {shape_text(values.shape)}")
    payload = MAGIC + struct.pack("<I", values.shape[0]) + np.ascontiguousarray(values).tobytes()
    pathlib.Path(path).write_bytes(payload)


def read_correlation(path) -> CorrelationMatrix:
    """Read an LGC1 file into a fresh CorrelationMatrix."""
    data = pathlib.Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{str(path)!r} is not an LGC1 file (bad magic)", 0)
    if len(data) < len(MAGIC) + 4:
        raise FormatError("truncated file while reading class count", len(MAGIC))
    (num_classes,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    expected = start + 8 * num_classes * num_classes
    if len(data) != expected:
        raise FormatError(
            f"expected {expected} bytes for C={num_classes}, found {len(data)}", min(len(data), expected)
        )
    values = np.frombuffer(data, dtype="<f8", offset=start).reshape(num_classes, num_classes)
    return CorrelationMatrix.from_array(values)
