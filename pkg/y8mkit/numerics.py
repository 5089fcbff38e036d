"""
Dense tensors with recorded backward passes.

Every operation here computes its forward value with numpy (64-bit) and, when a
:class:`Tape` is active and one of its inputs requires gradients, records a
closure that accumulates (``+=``) the partial derivatives into the inputs'
``grad`` buffers.  Shared parameters (the per-step LSTM weights, for example)
therefore sum their contributions.

EXAMPLE::

    w = TensorBuffer(np.ones((4, 2)), requires_grad=True)
    with Tape() as tape:
        y = sum_(matmul(x, w))
    tape.backward(y)
    w.grad  # dy/dw

.. rubric:: Classes
.. autosummary::
    ~Mode
    ~ParamGroup
    ~RngStream
    ~Tape
    ~TensorBuffer

.. rubric:: Operations
.. autosummary::
    ~activation
    ~add
    ~clamp
    ~concat
    ~custom_op
    ~dropout
    ~finite_diff_grad
    ~gaussian
    ~layer_norm
    ~log
    ~matmul
    ~max_over
    ~mean
    ~mul
    ~reshape
    ~scale
    ~softmax
    ~stack
    ~sub
    ~sum_
    ~take
    ~transpose
    ~unfold
"""

import contextvars
import dataclasses
import enum
import logging
import zlib

import numpy as np

from .core import ConfigError
from .core import DimensionError
from .core import shape_text

logger = logging.getLogger(__name__)
DTYPE = np.float64
SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF

_ACTIVE_TAPE = contextvars.ContextVar("active_tape", default=None)


class Mode(str, enum.Enum):
    """Forward-pass mode: training enables dropout and adaptive noise."""

    TRAIN = "train"
    EVAL = "eval"


class TensorBuffer:
    """
    Dense N-dimensional array with paired gradient storage.

    .. autosummary::
        ~accumulate
        ~item
        ~zero_grad

    .. rubric:: Property Methods
    .. autosummary::
        ~ndim
        ~shape
        ~size
    """

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=DTYPE, copy=True, order="C")
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    def __repr__(self) -> str:
        """Text representation."""
        label = f" {self.name!r}" if self.name else ""
        return f"TensorBuffer({shape_text(self.shape)}{label}, requires_grad={self.requires_grad})"

    @property
    def ndim(self) -> int:
        """Number of axes."""
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        """Extent of each axis."""
        return self.values.shape

    @property
    def size(self) -> int:
        """Total number of values."""
        return self.values.size

    def accumulate(self, grad) -> None:
        """Add ``grad`` into this buffer's gradient."""
        grad = np.asarray(grad, dtype=DTYPE)
        if grad.shape != self.shape:
            raise DimensionError(
                f"gradient shape {shape_text(grad.shape)} does not match {shape_text(self.shape)}"
            )
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += grad

    def item(self) -> float:
        """The single value of a one-element buffer."""
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float(self.values)

    def zero_grad(self) -> None:
        """Forget accumulated gradients."""
        self.grad = None

    # operators delegate to the module functions

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """
    Record of backward closures for one forward pass.

    Use as a context manager; operations executed inside record themselves
    when any input requires gradients.

    .. autosummary::
        ~backward
        ~record
    """

    def __init__(self):
        self._entries = []
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, step) -> None:
        """Append a backward closure."""
        self._entries.append(step)

    def backward(self, output, seed=None) -> None:
        """
        Propagate gradients from ``output`` back through the recorded operations.

        PARAMETERS

        output : TensorBuffer
            Usually the scalar loss.
        seed : array
            Upstream gradient of ``output``, default: ones.
        """
        if not output.requires_grad:
            return
        output.accumulate(np.ones_like(output.values) if seed is None else seed)
        for step in reversed(self._entries):
            step()
        self._entries.clear()


def as_tensor(value) -> TensorBuffer:
    """Wrap arrays and numbers; pass tensors through."""
    if isinstance(value, TensorBuffer):
        return value
    return TensorBuffer(value)


def _push(tensor, grad):
    if tensor.requires_grad:
        tensor.accumulate(grad)


def custom_op(values, parents, backward) -> TensorBuffer:
    """
    Wrap ``values`` as the output of an operation on ``parents``.

    ``backward(g)`` receives the output gradient and must return one gradient
    (or ``None``) per parent, in order.
    """
    tape = _ACTIVE_TAPE.get()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = TensorBuffer(values, requires_grad=needs_grad)
    if needs_grad:

        def step():
            if out.grad is None:
                return
            for parent, grad in zip(parents, backward(out.grad)):
                if grad is not None:
                    _push(parent, grad)

        tape.record(step)
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast {shape_text(a.shape)} with {shape_text(b.shape)}") from exc


def add(a, b) -> TensorBuffer:
    """Elementwise sum with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return custom_op(
        a.values + b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> TensorBuffer:
    """Elementwise difference with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return custom_op(
        a.values - b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> TensorBuffer:
    """Elementwise product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return custom_op(
        a.values * b.values,
        (a, b),
        lambda g: (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)),
    )


def scale(a, factor: float) -> TensorBuffer:
    """Multiply by a constant."""
    a = as_tensor(a)
    return custom_op(a.values * factor, (a,), lambda g: (g * factor,))


def matmul(a, b) -> TensorBuffer:
    """
    Matrix product of 1-D or 2-D operands.

    A 1-D left operand is a row vector, a 1-D right operand a column vector;
    the corresponding axis is dropped from the result.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul needs 1-D or 2-D operands: {shape_text(a.shape)} @ {shape_text(b.shape)}")
    a2 = a.values.reshape(1, -1) if a.ndim == 1 else a.values
    b2 = b.values.reshape(-1, 1) if b.ndim == 1 else b.values
    if a2.shape[1] != b2.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {shape_text(a.shape)} @ {shape_text(b.shape)}")
    out2 = a2 @ b2
    if a.ndim == 1 and b.ndim == 1:
        out = out2.reshape(())
    elif a.ndim == 1:
        out = out2[0]
    elif b.ndim == 1:
        out = out2[:, 0]
    else:
        out = out2

    def backward(g):
        g2 = g.reshape(out2.shape)
        return (g2 @ b2.T).reshape(a.shape), (a2.T @ g2).reshape(b.shape)

    return custom_op(out, (a, b), backward)


def transpose(a) -> TensorBuffer:
    """Swap the two axes of a matrix."""
    a = as_tensor(a)
    return custom_op(a.values.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> TensorBuffer:
    """Same values, new shape."""
    a = as_tensor(a)
    try:
        values = a.values.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {shape_text(a.shape)} to {shape_text(shape)}") from exc
    return custom_op(values, (a,), lambda g: (g.reshape(a.shape),))


def take(a, index) -> TensorBuffer:
    """Select with a numpy index (row, slice, or integer array)."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, index, g)
        return (full,)

    return custom_op(a.values[index], (a,), backward)


def concat(tensors, axis=0) -> TensorBuffer:
    """Join tensors along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return custom_op(
        np.concatenate([t.values for t in tensors], axis=axis),
        tensors,
        lambda g: np.split(g, bounds, axis=axis),
    )


def stack(tensors, axis=0) -> TensorBuffer:
    """Join equal-shape tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    return custom_op(
        np.stack([t.values for t in tensors], axis=axis),
        tensors,
        lambda g: [np.take(g, i, axis=axis) for i in range(len(tensors))],
    )


def sum_(a, axis=None) -> TensorBuffer:
    """Sum over ``axis`` (all axes when ``None``)."""
    a = as_tensor(a)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return custom_op(a.values.sum(axis=axis), (a,), backward)


def mean(a, axis=None) -> TensorBuffer:
    """Arithmetic mean over ``axis``."""
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis), 1.0 / count)


def max_over(a, axis=0) -> TensorBuffer:
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    where = np.expand_dims(np.argmax(a.values, axis=axis), axis)

    def backward(g):
        full = np.zeros_like(a.values)
        np.put_along_axis(full, where, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return custom_op(np.take_along_axis(a.values, where, axis=axis).squeeze(axis), (a,), backward)


def _sigmoid(x):
    # tanh form stays finite for any magnitude
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activation(x, kind: str) -> TensorBuffer:
    """Elementwise ``sigmoid``, ``tanh``, or ``relu``."""
    x = as_tensor(x)
    if kind == "sigmoid":
        y = _sigmoid(x.values)
        return custom_op(y, (x,), lambda g: (g * y * (1.0 - y),))
    if kind == "tanh":
        y = np.tanh(x.values)
        return custom_op(y, (x,), lambda g: (g * (1.0 - y * y),))
    if kind == "relu":
        positive = x.values > 0
        return custom_op(np.where(positive, x.values, 0.0), (x,), lambda g: (g * positive,))
    raise ConfigError(f"Unknown activation {kind=!r}")


def sigmoid(x) -> TensorBuffer:
    """Logistic function."""
    return activation(x, "sigmoid")


def tanh(x) -> TensorBuffer:
    """Hyperbolic tangent."""
    return activation(x, "tanh")


def relu(x) -> TensorBuffer:
    """Rectified linear unit."""
    return activation(x, "relu")


def softmax(x, axis=-1) -> TensorBuffer:
    """
    Normalized exponentials along ``axis``.

    The maximum is subtracted first so large logits do not overflow.
    """
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise DimensionError("softmax of an empty axis")
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return custom_op(y, (x,), backward)


def log(x) -> TensorBuffer:
    """Natural logarithm."""
    x = as_tensor(x)
    return custom_op(np.log(x.values), (x,), lambda g: (g / x.values,))


def clamp(x, low: float, high: float) -> TensorBuffer:
    """Clip into ``[low, high]``; no gradient flows through clipped entries."""
    x = as_tensor(x)
    inside = (x.values >= low) & (x.values <= high)
    return custom_op(np.clip(x.values, low, high), (x,), lambda g: (g * inside,))


def layer_norm(x, gain, bias, eps=1e-6) -> TensorBuffer:
    """
    Normalize the last axis to zero mean and unit (population) variance.

    ``y = gain * (x - mean) / sqrt(var + eps) + bias``; ``gain`` and ``bias``
    broadcast against ``x``.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    if n < 2:
        raise DimensionError(f"layer_norm needs at least 2 features, received {shape_text(x.shape)}")
    centered = x.values - x.values.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = gain.values * xhat + bias.values

    def backward(g):
        dxhat = g * gain.values
        dx = inv_std * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return custom_op(out, (x, gain, bias), backward)


def unfold(x, window: int) -> TensorBuffer:
    """
    Stack every ``window`` consecutive rows of a ``T x D`` matrix.

    Row ``t`` of the ``(T - window + 1) x (window * D)`` result is
    ``x[t : t + window]`` flattened.
    """
    x = as_tensor(x)
    steps, width = x.shape
    count = steps - window + 1
    if count < 1:
        raise DimensionError(f"window {window} longer than {steps} rows")
    views = np.lib.stride_tricks.sliding_window_view(x.values, (window, width))
    out = views.reshape(count, window * width)

    def backward(g):
        full = np.zeros_like(x.values)
        for u in range(window):
            full[u : u + count] += g[:, u * width : (u + 1) * width]
        return (full,)

    return custom_op(out, (x,), backward)


def dropout(x, drop_prob: float, mode, rng) -> TensorBuffer:
    """
    Inverted dropout.

    In training mode each element is zeroed with probability ``drop_prob`` and
    survivors are scaled by ``1 / (1 - drop_prob)``.  Evaluation mode is the
    identity.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigError(f"drop_prob must be in [0, 1), received {drop_prob=!r}")
    x = as_tensor(x)
    if Mode(mode) is Mode.EVAL or drop_prob == 0.0:
        return x
    keep = rng.uniform(x.shape) >= drop_prob
    factor = keep / (1.0 - drop_prob)
    return custom_op(x.values * factor, (x,), lambda g: (g * factor,))


def gaussian(shape, rng) -> TensorBuffer:
    """Independent standard normal draws from ``rng``."""
    return TensorBuffer(rng.normal(shape))


def finite_diff_grad(f, x, h=1e-5) -> TensorBuffer:
    """
    Central-difference gradient of scalar ``f`` at ``x``.

    PARAMETERS

    f : callable
        Receives ``x`` (perturbed in place) and returns a number or a
        one-element TensorBuffer.
    x : TensorBuffer
        Point of evaluation; restored on return.
    h : float
        Step size, default ``1e-5``.
    """

    def evaluate():
        value = f(x)
        return value.item() if isinstance(value, TensorBuffer) else float(value)

    grad = np.zeros_like(x.values)
    flat = x.values.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        upper = evaluate()
        flat[i] = saved - h
        lower = evaluate()
        flat[i] = saved
        grad.reshape(-1)[i] = (upper - lower) / (2.0 * h)
    return TensorBuffer(grad)


class RngStream:
    """
    Reproducible random draws addressed by ``(seed, labels, position)``.

    Each draw request consumes one position; the generator for a request is
    derived from the seed, the stream labels and that position, so the same
    address always yields the same values.  :meth:`derive` makes an
    independent sub-stream.

    .. autosummary::
        ~derive
        ~generator
        ~integers
        ~normal
        ~permutation
        ~uniform
    """

    def __init__(self, seed: int, position: int = 0, labels=()):
        self.seed = int(seed) & SEED_MASK
        self.position = int(position)
        self.labels = tuple(labels)

    def __repr__(self) -> str:
        """Text representation."""
        path = "/".join(self.labels) or "root"
        return f"RngStream(seed={self.seed}, stream={path!r}, position={self.position})"

    def derive(self, label: str) -> "RngStream":
        """Independent sub-stream named ``label``."""
        return RngStream(self.seed, 0, self.labels + (str(label),))

    def generator(self) -> np.random.Generator:
        """numpy Generator for the current position; advances the position."""
        keys = tuple(zlib.crc32(label.encode()) for label in self.labels)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=keys + (self.position,))
        self.position += 1
        return np.random.default_rng(sequence)

    def integers(self, low, high, size=None):
        """Integers in ``[low, high)``."""
        return self.generator().integers(low, high, size=size)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws."""
        return self.generator().standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Random ordering of ``range(n)``."""
        return self.generator().permutation(n)

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws in ``[0, 1)``."""
        return self.generator().random(shape)


def glorot_uniform(shape, rng, fan_in, fan_out, name=None) -> TensorBuffer:
    """Trainable tensor, uniform in ``+/- sqrt(6 / (fan_in + fan_out))``."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    values = (2.0 * rng.uniform(shape) - 1.0) * limit
    return TensorBuffer(values, requires_grad=True, name=name)


def zeros(shape, name=None) -> TensorBuffer:
    """Trainable zero tensor."""
    return TensorBuffer(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name=None) -> TensorBuffer:
    """Trainable tensor of ones."""
    return TensorBuffer(np.ones(shape), requires_grad=True, name=name)


class ParamGroup:
    """
    Mixin for dataclasses whose fields are parameter tensors.

    .. autosummary::
        ~named
    """

    def named(self, prefix: str = "") -> dict:
        """Trainable tensors keyed by ``prefix + field name``, field order."""
        return {
            f"{prefix}{field.name}": value
            for field in dataclasses.fields(self)
            if isinstance(value := getattr(self, field.name), TensorBuffer)
        }
