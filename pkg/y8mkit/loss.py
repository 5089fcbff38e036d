"""
Per-video training losses.

.. rubric:: Types
.. autosummary::
    ~CenterTable
    ~LossConfig

.. rubric:: Functions
.. autosummary::
    ~bce_terms
    ~center_loss
    ~cross_entropy
    ~joint_loss
    ~label_vector
    ~pseudo_huber
    ~video_loss

.. rubric:: Exceptions
.. autosummary::
    ~EmptyLabelSet
"""

import dataclasses
import logging

import numpy as np

from .core import ConfigError
from .core import DimensionError
from .core import Y8mException
from .numerics import TensorBuffer
from .numerics import add
from .numerics import as_tensor
from .numerics import custom_op
from .numerics import mean
from .numerics import mul
from .numerics import scale
from .numerics import sub
from .numerics import sum_
from .numerics import take

logger = logging.getLogger(__name__)

LOSS_KINDS = ("ce", "ce_center", "huber_ce")
CENTER_INIT_STD = 0.1  # variance 0.01


class EmptyLabelSet(Y8mException, ValueError):
    """Center loss is undefined for a video without labels."""


@dataclasses.dataclass
class LossConfig:
    """
    Choice of loss and its constants.

    ``center_weight`` balances the center term (``ce_center``); ``delta`` is
    the pseudo-Huber scale (``huber_ce``); ``huber_per_class`` wraps each
    class term instead of the per-video sum.
    """

    kind: str = "ce"
    center_weight: float = 0.001
    delta: float = 1.0
    clamp_eps: float = 1e-6
    huber_per_class: bool = False

    def validate(self) -> None:
        """Raise ConfigError for an unusable combination."""
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"Unknown loss kind={self.kind!r}; choose from {LOSS_KINDS}")
        if self.kind == "huber_ce" and not self.delta > 0:
            raise ConfigError(f"huber_ce needs delta > 0, received delta={self.delta!r}")
        if self.center_weight < 0:
            raise ConfigError(f"center_weight must be >= 0, received {self.center_weight!r}")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError(f"clamp_eps must be in (0, 0.5), received {self.clamp_eps!r}")


@dataclasses.dataclass
class CenterTable:
    """One trainable center per class: ``centers`` is ``C x d_e``."""

    centers: TensorBuffer

    @classmethod
    def init(cls, num_classes, width, rng):
        """Centers drawn i.i.d. from N(0, 0.01)."""
        values = CENTER_INIT_STD * rng.normal((num_classes, width))
        return cls(TensorBuffer(values, requires_grad=True, name="centers"))

    @property
    def num_classes(self) -> int:
        """C."""
        return self.centers.shape[0]


def label_vector(labels, num_classes: int) -> np.ndarray:
    """0/1 target vector of length C."""
    target = np.zeros(num_classes)
    labels = list(labels)
    if any(not 0 <= y < num_classes for y in labels):
        raise DimensionError(f"labels {labels!r} outside [0, {num_classes})")
    target[labels] = 1.0
    return target


def _bce_grad(p, target):
    """Derivative of the binary cross-entropy with respect to the probability."""
    return -target / p + (1.0 - target) / (1.0 - p)


def bce_terms(probs, labels, clamp_eps=1e-6) -> TensorBuffer:
    """
    Per-class binary cross-entropy of clamped probabilities.

    Probabilities outside ``[clamp_eps, 1 - clamp_eps]`` are clipped and pass
    no gradient.
    """
    probs = as_tensor(probs)
    target = label_vector(labels, probs.shape[0])
    p = np.clip(probs.values, clamp_eps, 1.0 - clamp_eps)
    inside = (probs.values >= clamp_eps) & (probs.values <= 1.0 - clamp_eps)
    terms = -(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    return custom_op(terms, (probs,), lambda g: (g * _bce_grad(p, target) * inside,))


def cross_entropy(probs, labels, clamp_eps=1e-6) -> TensorBuffer:
    """Multi-label cross-entropy, summed over classes."""
    return sum_(bce_terms(probs, labels, clamp_eps))


def center_loss(embedding, labels, table: CenterTable) -> TensorBuffer:
    """
    Mean squared distance from the embedding to each positive label's center.

    Gradients reach both the embedding and the selected centers.
    """
    labels = list(labels)
    if not labels:
        raise EmptyLabelSet("center loss needs at least one label")
    embedding = as_tensor(embedding)
    if embedding.shape != (table.centers.shape[1],):
        raise DimensionError(
            f"embedding width {embedding.shape} does not match centers {table.centers.shape}"
        )
    if any(not 0 <= y < table.num_classes for y in labels):
        raise DimensionError(f"labels {labels!r} outside [0, {table.num_classes})")
    diff = sub(embedding, take(table.centers, np.asarray(labels)))
    return mean(sum_(mul(diff, diff), axis=1))


def joint_loss(ce, lc, weight: float) -> TensorBuffer:
    """``ce + weight * lc``."""
    if weight == 0:
        return as_tensor(ce)
    return add(ce, scale(lc, weight))


def pseudo_huber(ce, delta: float) -> TensorBuffer:
    """
    Smooth Huber transform ``delta**2 (sqrt(1 + (ce/delta)**2) - 1)``, elementwise.

    Quadratic (``ce**2 / 2``) near zero, linear with slope ``delta`` far out.
    """
    if not delta > 0:
        raise ConfigError(f"pseudo-Huber needs delta > 0, received {delta=!r}")
    ce = as_tensor(ce)
    root = np.sqrt(1.0 + (ce.values / delta) ** 2)
    return custom_op(delta**2 * (root - 1.0), (ce,), lambda g: (g * ce.values / root,))


def video_loss(probs, labels, embedding, cfg: LossConfig, table: CenterTable = None) -> TensorBuffer:
    """The configured loss of one video."""
    if cfg.kind == "huber_ce":
        if cfg.huber_per_class:
            return sum_(pseudo_huber(bce_terms(probs, labels, cfg.clamp_eps), cfg.delta))
        return pseudo_huber(cross_entropy(probs, labels, cfg.clamp_eps), cfg.delta)
    ce = cross_entropy(probs, labels, cfg.clamp_eps)
    if cfg.kind == "ce_center" and labels:
        if table is None:
            raise ConfigError("ce_center loss needs a center table")
        return joint_loss(ce, center_loss(embedding, labels, table), cfg.center_weight)
    return ce


# -----------------------------------------------------------------------------
# :copyright: (c) 2024-2025, y8mkit developers
#
# Distributed under the terms of the license in the LICENSE.txt file,
# distributed with this software.
# -----------------------------------------------------------------------------
