"""
Video pooling layer: frame sequence to one fixed-length vector.

Five encoders collapse a ``T x D`` sequence of frame features into a vector
whose length does not depend on ``T``.

.. rubric:: Types
.. autosummary::
    ~CnnParams
    ~FeatureSequence
    ~LstmOptions
    ~LstmParams

.. rubric:: Encoders
.. autosummary::
    ~encode_adaptive_noise
    ~encode_cnn
    ~encode_lstm
    ~encode_position
    ~encode_self_attention

.. rubric:: Support
.. autosummary::
    ~attention_weights
    ~lstm_scan
    ~noise_scale
    ~pe_matrix
    ~pooled_size

.. rubric:: Exceptions
.. autosummary::
    ~InputTooShort
    ~StatsError
"""

import dataclasses
import logging
import typing

import numpy as np

from .core import ConfigError
from .core import DimensionError
from .core import Y8mException
from .core import shape_text
from .numerics import Mode
from .numerics import ParamGroup
from .numerics import TensorBuffer
from .numerics import add
from .numerics import concat
from .numerics import dropout
from .numerics import gaussian
from .numerics import glorot_uniform
from .numerics import layer_norm
from .numerics import matmul
from .numerics import max_over
from .numerics import mul
from .numerics import relu
from .numerics import reshape
from .numerics import scale
from .numerics import sigmoid
from .numerics import softmax
from .numerics import sum_
from .numerics import take
from .numerics import tanh
from .numerics import transpose
from .numerics import unfold
from .numerics import zeros

if typing.TYPE_CHECKING:  # pragma: no cover
    from .data import LabelStats

logger = logging.getLogger(__name__)

POOLING_KINDS = ("lstm", "cnn", "position", "attention", "noise")
PoolingOutput = TensorBuffer


class InputTooShort(Y8mException, ValueError):
    """Sequence has fewer frames than the convolution window."""


class StatsError(Y8mException, ValueError):
    """Label statistics cannot support the request."""


@dataclasses.dataclass
class FeatureSequence:
    """
    One video: per-frame features (frame and audio parts concatenated) and labels.

    .. rubric:: Property Methods
    .. autosummary::
        ~feature_dim
        ~num_frames
    """

    frames: TensorBuffer
    labels: tuple = ()
    video_id: str = ""

    def __post_init__(self):
        if not isinstance(self.frames, TensorBuffer):
            self.frames = TensorBuffer(self.frames)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise DimensionError(f"frames must be T x D with T >= 1, received {shape_text(self.frames.shape)}")
        self.labels = tuple(sorted({int(k) for k in self.labels}))

    @property
    def feature_dim(self) -> int:
        """D, the width of one frame vector."""
        return self.frames.shape[1]

    @property
    def num_frames(self) -> int:
        """T, the number of frames."""
        return self.frames.shape[0]


@dataclasses.dataclass
class LstmOptions:
    """Switches of the LSTM encoder."""

    use_input_sum: bool = True
    use_candidate_sum: bool = True
    layer_norm: bool = False
    drop_prob: float = 0.2


@dataclasses.dataclass
class LstmParams(ParamGroup):
    """
    Gate weights of the LSTM variant.

    ``u_*`` map frames (``D x d``), ``w_*`` map the previous short-term state
    (``d x d``).  The layer-normalization tensors are ``4 x d``, one row per
    gate in the order input, forget, output, candidate.
    """

    u_i: TensorBuffer
    u_f: TensorBuffer
    u_o: TensorBuffer
    u_g: TensorBuffer
    w_i: TensorBuffer
    w_f: TensorBuffer
    w_o: TensorBuffer
    w_g: TensorBuffer
    b_i: TensorBuffer
    b_f: TensorBuffer
    b_o: TensorBuffer
    b_g: TensorBuffer
    ln_gain: typing.Optional[TensorBuffer] = None
    ln_bias: typing.Optional[TensorBuffer] = None

    @property
    def cell_size(self) -> int:
        """d, width of the cell state."""
        return self.b_i.shape[0]

    @property
    def input_size(self) -> int:
        """D, width of a frame vector."""
        return self.u_i.shape[0]

    @classmethod
    def init(cls, input_size, cell_size, rng, layer_norm=False):
        """Glorot-uniform matrices, zero biases, forget-gate bias +1."""
        u = {k: glorot_uniform((input_size, cell_size), rng, input_size, cell_size) for k in "ifog"}
        w = {k: glorot_uniform((cell_size, cell_size), rng, cell_size, cell_size) for k in "ifog"}
        b = {k: zeros(cell_size) for k in "ifog"}
        b["f"].values[:] = 1.0
        gain = bias = None
        if layer_norm:
            gain = TensorBuffer(np.ones((4, cell_size)), requires_grad=True)
            bias = zeros((4, cell_size))
            bias.values[1] = 1.0
        return cls(
            *(u[k] for k in "ifog"),
            *(w[k] for k in "ifog"),
            *(b[k] for k in "ifog"),
            ln_gain=gain,
            ln_bias=bias,
        )


@dataclasses.dataclass
class CnnParams(ParamGroup):
    """Temporal convolution filter ``c_v x D x d`` and bias ``d``."""

    w_conv: TensorBuffer
    b_conv: TensorBuffer

    @classmethod
    def init(cls, input_size, channels, window, rng):
        """Glorot-uniform filter, zero bias."""
        fan_in = window * input_size
        return cls(
            glorot_uniform((window, input_size, channels), rng, fan_in, channels),
            zeros(channels),
        )


def pooled_size(kind: str, input_size: int, cell_size: int = 0, channels: int = 0, options=None) -> int:
    """Length d' of the pooled vector for encoder ``kind``."""
    if kind == "lstm":
        options = options or LstmOptions()
        size = 2 * cell_size
        size += input_size if options.use_input_sum else 0
        size += cell_size if options.use_candidate_sum else 0
        return size
    if kind == "cnn":
        return channels
    if kind in ("position", "attention", "noise"):
        return input_size
    raise ConfigError(f"Unknown pooling {kind=!r}; choose from {POOLING_KINDS}")


def lstm_scan(frames, p: LstmParams, layer_norm_on=False, drop_prob=0.0, rng=None, mode=Mode.EVAL):
    """
    Run the recurrence over all frames from zero states.

    Returns ``(cells, states, candidates)``: per-step ``c_t``, ``s_t``, ``g_t``.
    Dropout (training mode) acts on the state passed to the next step only.
    """
    if frames.shape[1] != p.input_size:
        raise DimensionError(
            f"frame width {frames.shape[1]} does not match LSTM input size {p.input_size}"
        )
    if layer_norm_on and p.ln_gain is None:
        raise ConfigError("layer normalization requested but LSTM has no normalization parameters")
    d = p.cell_size
    u = concat([p.u_i, p.u_f, p.u_o, p.u_g], axis=1)
    w = concat([p.w_i, p.w_f, p.w_o, p.w_g], axis=1)
    b = concat([p.b_i, p.b_f, p.b_o, p.b_g])
    projected = add(matmul(frames, u), b)  # T x 4d, input part of every gate

    cell = TensorBuffer(np.zeros(d))
    state = TensorBuffer(np.zeros(d))
    cells, states, candidates = [], [], []
    steps = frames.shape[0]
    for t in range(steps):
        pre = reshape(add(take(projected, t), matmul(state, w)), (4, d))
        if layer_norm_on:
            pre = layer_norm(pre, p.ln_gain, p.ln_bias)
        gates = sigmoid(take(pre, slice(0, 3)))
        candidate = tanh(take(pre, 3))
        cell = add(mul(cell, take(gates, 1)), mul(candidate, take(gates, 0)))
        state = mul(tanh(cell), take(gates, 2))
        cells.append(cell)
        states.append(state)
        candidates.append(candidate)
        if t < steps - 1:
            state = dropout(state, drop_prob, mode, rng)
    return cells, states, candidates


def encode_lstm(seq: FeatureSequence, p: LstmParams, opts=None, rng=None, mode=Mode.EVAL) -> PoolingOutput:
    """
    LSTM encoder: ``[c_T, s_T]`` plus, per ``opts``, the frame sum and the candidate sum.

    PARAMETERS

    seq : FeatureSequence
        Input video.
    p : LstmParams
        Gate weights.
    opts : LstmOptions
        ``use_input_sum`` appends ``sum_t I_t``; ``use_candidate_sum`` appends
        ``sum_t g_t``; ``layer_norm`` normalizes every gate pre-activation;
        ``drop_prob`` is the dropout on the recurrent state (training only).
    rng : RngStream
        Source of dropout masks.
    mode : Mode
        ``train`` or ``eval``.
    """
    opts = opts or LstmOptions()
    cells, states, candidates = lstm_scan(seq.frames, p, opts.layer_norm, opts.drop_prob, rng, mode)
    parts = [cells[-1], states[-1]]
    if opts.use_input_sum:
        parts.append(sum_(seq.frames, axis=0))
    if opts.use_candidate_sum:
        parts.append(sum_(concat([reshape(g, (1, -1)) for g in candidates]), axis=0))
    return concat(parts)


def encode_cnn(seq: FeatureSequence, w_conv, b_conv) -> PoolingOutput:
    """Temporal convolution (stride 1, full frame width), ReLU, max over time."""
    window, width, channels = w_conv.shape
    if seq.num_frames < window:
        raise InputTooShort(f"{seq.video_id!r} has T={seq.num_frames} frames, window needs {window}")
    if seq.feature_dim != width:
        raise DimensionError(f"frame width {seq.feature_dim} does not match filter {shape_text(w_conv.shape)}")
    windows = unfold(seq.frames, window)
    activations = relu(add(matmul(windows, reshape(w_conv, (window * width, channels))), b_conv))
    return max_over(activations, axis=0)


def pe_matrix(steps: int, width: int) -> TensorBuffer:
    """
    Position-encoding weights ``L[i, j] = (1 - i/T) - (j/D) (1 - 2 i/T)``.

    Indices are 1-based.
    """
    i = np.arange(1, steps + 1, dtype=float)[:, None] / steps
    j = np.arange(1, width + 1, dtype=float)[None, :] / width
    return TensorBuffer((1.0 - i) - j * (1.0 - 2.0 * i))


def encode_position(seq: FeatureSequence) -> PoolingOutput:
    """Weight every frame element by :func:`pe_matrix`, then sum over time."""
    weights = pe_matrix(seq.num_frames, seq.feature_dim)
    return sum_(mul(seq.frames, weights), axis=0)


def attention_weights(frames, temperature=1.0) -> TensorBuffer:
    """Softmax over frames of each frame's summed inner product with all frames."""
    logits = sum_(matmul(frames, transpose(frames)), axis=1)
    if temperature != 1.0:
        logits = scale(logits, 1.0 / temperature)
    return softmax(logits)


def encode_self_attention(seq: FeatureSequence, temperature=1.0) -> PoolingOutput:
    """Attention-weighted sum of frames (indirect clustering of the main scene)."""
    return matmul(attention_weights(seq.frames, temperature), seq.frames)


def noise_scale(labels, stats: "LabelStats") -> float:
    """Mean inverse class count of ``labels``: ``(1/n) sum 1/S(y)``."""
    if len(labels) == 0:
        raise StatsError("adaptive noise needs at least one label")
    counts = np.array([stats.count(y) for y in labels], dtype=float)
    if np.any(counts < 1):
        missing = [y for y, n in zip(labels, counts) if n < 1]
        raise StatsError(f"labels with zero training examples: {missing!r}")
    return float(np.mean(1.0 / counts))


def encode_adaptive_noise(seq: FeatureSequence, stats: "LabelStats", rng=None, mode=Mode.EVAL) -> PoolingOutput:
    """
    Sum pooling with label-dependent Gaussian noise on every frame (training only).

    Rare labels get larger noise: ``I_t <- I_t + gamma * Z`` with a fresh
    ``Z ~ N(0, I)`` per frame and ``gamma`` from :func:`noise_scale`.
    """
    frames = seq.frames
    if Mode(mode) is Mode.TRAIN:
        gamma = noise_scale(seq.labels, stats)
        logger.debug("%s: adaptive noise gamma=%.6g", seq.video_id, gamma)
        frames = add(frames, scale(gaussian(frames.shape, rng), gamma))
    return sum_(frames, axis=0)
