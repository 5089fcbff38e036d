"""
Classification layer: per-class probabilities from a pooled vector.

Every head returns ``C`` independent probabilities (multi-label, no
normalization across classes).  The many-to-many head reads the raw frames
instead of a pooled vector.

.. rubric:: Types
.. autosummary::
    ~HeadParams
    ~MlpParams
    ~MoeParams

.. rubric:: Heads
.. autosummary::
    ~many_to_many_forward
    ~many_to_many_score
    ~mlp_forward
    ~mlp_score
    ~moe2_score
    ~moe_components
    ~moe_score
"""

import dataclasses
import logging
import typing

import numpy as np

from .core import DimensionError
from .core import shape_text
from .numerics import Mode
from .numerics import ParamGroup
from .numerics import TensorBuffer
from .numerics import add
from .numerics import glorot_uniform
from .numerics import layer_norm
from .numerics import matmul
from .numerics import mean
from .numerics import mul
from .numerics import relu
from .numerics import reshape
from .numerics import sigmoid
from .numerics import softmax
from .numerics import stack
from .numerics import sum_
from .numerics import zeros
from .pooling import LstmParams
from .pooling import lstm_scan

logger = logging.getLogger(__name__)

CLASSIFIER_KINDS = ("moe", "moe2", "mlp", "many_to_many")
MLP_DEPTH = 3
ScoreVector = TensorBuffer


@dataclasses.dataclass
class MoeParams(ParamGroup):
    """
    Per-class experts and gates.

    ``expert_w`` and ``gate_w`` are ``C x E x width``.  In the one-layer form
    ``width`` is the pooled size d'.  In the two-layer form ``width`` is the
    hidden size h and the input first passes through the projections
    ``proj_e`` / ``proj_g`` (``h x d'``), shared across classes.
    """

    expert_w: TensorBuffer
    expert_b: TensorBuffer
    gate_w: TensorBuffer
    gate_b: TensorBuffer
    proj_e: typing.Optional[TensorBuffer] = None
    proj_e_b: typing.Optional[TensorBuffer] = None
    proj_g: typing.Optional[TensorBuffer] = None
    proj_g_b: typing.Optional[TensorBuffer] = None

    @property
    def num_experts(self) -> int:
        """E."""
        return self.expert_w.shape[1]

    @classmethod
    def init(cls, num_classes, num_experts, input_size, rng, hidden=None):
        """One-layer form, or the two-layer form when ``hidden`` is given."""
        width = hidden or input_size
        shape = (num_classes, num_experts, width)
        params = cls(
            glorot_uniform(shape, rng, width, num_experts),
            zeros((num_classes, num_experts)),
            glorot_uniform(shape, rng, width, num_experts),
            zeros((num_classes, num_experts)),
        )
        if hidden:
            params.proj_e = glorot_uniform((hidden, input_size), rng, input_size, hidden)
            params.proj_e_b = zeros(hidden)
            params.proj_g = glorot_uniform((hidden, input_size), rng, input_size, hidden)
            params.proj_g_b = zeros(hidden)
        return params


@dataclasses.dataclass
class MlpParams(ParamGroup):
    """Three hidden layers of width h and the projection to C logits."""

    w1: TensorBuffer
    b1: TensorBuffer
    w2: TensorBuffer
    b2: TensorBuffer
    w3: TensorBuffer
    b3: TensorBuffer
    w_out: TensorBuffer
    b_out: TensorBuffer
    ln_gain1: typing.Optional[TensorBuffer] = None
    ln_bias1: typing.Optional[TensorBuffer] = None
    ln_gain2: typing.Optional[TensorBuffer] = None
    ln_bias2: typing.Optional[TensorBuffer] = None
    ln_gain3: typing.Optional[TensorBuffer] = None
    ln_bias3: typing.Optional[TensorBuffer] = None

    @classmethod
    def init(cls, input_size, hidden, num_classes, rng, layer_norm=False):
        """Glorot-uniform weights, zero biases, unit normalization gains."""
        params = cls(
            glorot_uniform((input_size, hidden), rng, input_size, hidden),
            zeros(hidden),
            glorot_uniform((hidden, hidden), rng, hidden, hidden),
            zeros(hidden),
            glorot_uniform((hidden, hidden), rng, hidden, hidden),
            zeros(hidden),
            glorot_uniform((hidden, num_classes), rng, hidden, num_classes),
            zeros(num_classes),
        )
        if layer_norm:
            for k in range(1, MLP_DEPTH + 1):
                setattr(params, f"ln_gain{k}", TensorBuffer(np.ones(hidden), requires_grad=True))
                setattr(params, f"ln_bias{k}", zeros(hidden))
        return params


@dataclasses.dataclass
class HeadParams(ParamGroup):
    """Per-step classifier of the many-to-many head: ``d x C`` and ``C``."""

    head_w: TensorBuffer
    head_b: TensorBuffer

    @classmethod
    def init(cls, cell_size, num_classes, rng):
        """Glorot-uniform weights, zero bias."""
        return cls(
            glorot_uniform((cell_size, num_classes), rng, cell_size, num_classes),
            zeros(num_classes),
        )


def _check_width(x, width, what):
    if x.ndim != 1 or x.shape[0] != width:
        raise DimensionError(f"{what} expects a vector of length {width}, received {shape_text(x.shape)}")


def _expert_logits(weights, bias, x):
    classes, experts, width = weights.shape
    flat = matmul(reshape(weights, (classes * experts, width)), x)
    return add(reshape(flat, (classes, experts)), bias)


def _mixture(expert_in, gate_in, p: MoeParams):
    experts = sigmoid(_expert_logits(p.expert_w, p.expert_b, expert_in))
    gates = softmax(_expert_logits(p.gate_w, p.gate_b, gate_in), axis=-1)
    return experts, gates


def _check_experts(p: MoeParams, num_experts):
    if num_experts is not None and num_experts != p.num_experts:
        raise DimensionError(f"parameters hold {p.num_experts} experts, {num_experts} requested")


def moe_components(x, p: MoeParams):
    """Expert probabilities and gate weights, each ``C x E``, of the one-layer MoE."""
    _check_width(x, p.expert_w.shape[2], "MoE")
    return _mixture(x, x, p)


def moe_score(x, p: MoeParams, num_experts=None) -> ScoreVector:
    """
    Mixture of experts: ``O_h[c] = sum_i g_i e_i``.

    ``e_i = sigmoid(<w_e, x> + b_e)`` and ``g = softmax_i(<w_g, x> + b_g)``,
    both per class.
    """
    _check_experts(p, num_experts)
    experts, gates = moe_components(x, p)
    return sum_(mul(gates, experts), axis=1)


def moe2_score(x, p: MoeParams, num_experts=None, hidden=None) -> ScoreVector:
    """Two-layer mixture of experts: experts and gates read ``W x + b'``."""
    _check_experts(p, num_experts)
    if p.proj_e is None or p.proj_g is None:
        raise DimensionError("two-layer MoE needs hidden projections")
    if hidden is not None and hidden != p.proj_e.shape[0]:
        raise DimensionError(f"parameters hold hidden size {p.proj_e.shape[0]}, {hidden} requested")
    _check_width(x, p.proj_e.shape[1], "two-layer MoE")
    hidden_e = add(matmul(p.proj_e, x), p.proj_e_b)
    hidden_g = add(matmul(p.proj_g, x), p.proj_g_b)
    experts, gates = _mixture(hidden_e, hidden_g, p)
    return sum_(mul(gates, experts), axis=1)


def mlp_forward(x, p: MlpParams, layer_norm_on=False):
    """
    Three ReLU layers (normalized before activation when enabled), sigmoid outputs.

    Returns ``(probabilities, last hidden activation)``.
    """
    _check_width(x, p.w1.shape[0], "MLP")
    hidden = x
    for k in range(1, MLP_DEPTH + 1):
        pre = add(matmul(hidden, getattr(p, f"w{k}")), getattr(p, f"b{k}"))
        if layer_norm_on:
            pre = layer_norm(pre, getattr(p, f"ln_gain{k}"), getattr(p, f"ln_bias{k}"))
        hidden = relu(pre)
    probs = sigmoid(add(matmul(hidden, p.w_out), p.b_out))
    return probs, hidden


def mlp_score(x, p: MlpParams, layer_norm_on=False) -> ScoreVector:
    """Class probabilities of the three-layer perceptron."""
    return mlp_forward(x, p, layer_norm_on)[0]


def many_to_many_forward(
    seq, lstm: LstmParams, head: HeadParams, layer_norm_on=False, drop_prob=0.0, rng=None, mode=Mode.EVAL
):
    """
    Per-step sigmoid classifier on every LSTM state, averaged over steps.

    Returns ``(probabilities, mean state)``.
    """
    if head.head_w.shape[0] != lstm.cell_size:
        raise DimensionError(
            f"head {shape_text(head.head_w.shape)} does not match cell size {lstm.cell_size}"
        )
    _, states, _ = lstm_scan(seq.frames, lstm, layer_norm_on, drop_prob, rng, mode)
    states = stack(states)
    per_step = sigmoid(add(matmul(states, head.head_w), head.head_b))
    return mean(per_step, axis=0), mean(states, axis=0)


def many_to_many_score(seq, lstm: LstmParams, head_w, head_b, **kwargs) -> ScoreVector:
    """Class probabilities of the many-to-many head (reads raw frames)."""
    return many_to_many_forward(seq, lstm, HeadParams(head_w, head_b), **kwargs)[0]
