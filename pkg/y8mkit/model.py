"""
The configured pipeline: pooling, classifier, label layer, and loss as one model.

.. autosummary::
    ~Pipeline
"""

import logging

import numpy as np
import pyRestTable

from .classifier import HeadParams
from .classifier import MlpParams
from .classifier import MoeParams
from .classifier import many_to_many_forward
from .classifier import mlp_forward
from .classifier import moe2_score
from .classifier import moe_score
from .config import ModelConfig
from .core import ConfigError
from .core import DimensionError
from .core import shape_text
from .labelgraph import CorrelationMatrix
from .labelgraph import apply_label_layer
from .loss import CenterTable
from .loss import video_loss
from .numerics import Mode
from .numerics import RngStream
from .pooling import CnnParams
from .pooling import LstmOptions
from .pooling import LstmParams
from .pooling import encode_adaptive_noise
from .pooling import encode_cnn
from .pooling import encode_lstm
from .pooling import encode_position
from .pooling import encode_self_attention
from .pooling import pooled_size

logger = logging.getLogger(__name__)


class Pipeline:
    """
    Parameters and forward pass of one configured model.

    Build with :meth:`build`; every component initializes from its own random
    sub-stream, so switching one component on or off leaves the others'
    initial values unchanged.

    .. autosummary::
        ~build
        ~buffers
        ~embedding_size
        ~forward
        ~load_state
        ~loss
        ~parameter_table
        ~parameters
        ~pool
        ~predict
        ~state
    """

    def __init__(self, cfg: ModelConfig, stats=None):
        self.cfg = cfg
        self.stats = stats
        self.lstm = None
        self.cnn = None
        self.moe = None
        self.mlp = None
        self.head = None
        self.correlation = None
        self.centers = None

    def __repr__(self) -> str:
        """Text representation."""
        return (
            f"Pipeline(pooling={self.cfg.pooling.kind!r}, classifier={self.cfg.classifier.kind!r},"
            f" labelgraph={self.cfg.labelgraph.enabled!r}, loss={self.cfg.loss.kind!r})"
        )

    @property
    def lstm_options(self) -> LstmOptions:
        """Switches of the LSTM encoder from the configuration."""
        p = self.cfg.pooling
        return LstmOptions(p.use_input_sum, p.use_candidate_sum, p.layer_norm, p.drop_prob)

    @property
    def pooled_size(self) -> int:
        """d', width of the pooling output (0 for the many-to-many head)."""
        p, dims = self.cfg.pooling, self.cfg.dims
        if self.cfg.classifier.kind == "many_to_many":
            return 0
        return pooled_size(p.kind, dims.feature_dim, dims.cell_size, dims.cnn_channels, self.lstm_options)

    def embedding_size(self) -> int:
        """Width of the penultimate embedding used by the center loss."""
        kind, dims = self.cfg.classifier.kind, self.cfg.dims
        if kind == "mlp":
            return dims.hidden
        if kind == "many_to_many":
            return dims.cell_size
        return self.pooled_size

    @classmethod
    def build(cls, cfg: ModelConfig, stats=None, correlation: CorrelationMatrix = None, rng=None) -> "Pipeline":
        """
        Initialize every parameter of the configured pipeline.

        PARAMETERS

        cfg : ModelConfig
            Validated here.
        stats : LabelStats
            Training-set label counts (needed by the adaptive-noise encoder).
        correlation : CorrelationMatrix
            Needed when the label layer is enabled.  The pipeline keeps its
            own copy.
        rng : RngStream
            Root stream, default: ``RngStream(cfg.seed)``.
        """
        cfg.validate()
        model = cls(cfg, stats)
        init = (rng or RngStream(cfg.seed)).derive("init")
        dims, pool = cfg.dims, cfg.pooling

        r = init.derive("pooling")
        if pool.kind == "lstm":
            model.lstm = LstmParams.init(dims.feature_dim, dims.cell_size, r, pool.layer_norm)
        elif pool.kind == "cnn":
            model.cnn = CnnParams.init(dims.feature_dim, dims.cnn_channels, pool.cnn_window, r)
        elif pool.kind == "noise" and stats is None:
            raise ConfigError("adaptive-noise pooling needs training label statistics")

        r = init.derive("classifier")
        kind, width = cfg.classifier.kind, model.pooled_size
        if kind == "moe":
            model.moe = MoeParams.init(dims.num_classes, dims.num_experts, width, r)
        elif kind == "moe2":
            model.moe = MoeParams.init(dims.num_classes, dims.num_experts, width, r, hidden=dims.hidden)
        elif kind == "mlp":
            model.mlp = MlpParams.init(width, dims.hidden, dims.num_classes, r, cfg.classifier.layer_norm)
        else:
            model.lstm = LstmParams.init(dims.feature_dim, dims.cell_size, r, pool.layer_norm)
            model.head = HeadParams.init(dims.cell_size, dims.num_classes, r)

        if cfg.labelgraph.enabled:
            if correlation is None:
                raise ConfigError("the label layer is enabled but no correlation matrix was given")
            if correlation.num_classes != dims.num_classes:
                raise ConfigError(
                    f"correlation matrix has {correlation.num_classes} classes, configuration {dims.num_classes}"
                )
            model.correlation = CorrelationMatrix.from_array(correlation.m.values)

        if cfg.loss.kind == "ce_center":
            model.centers = CenterTable.init(dims.num_classes, model.embedding_size(), init.derive("loss"))

        logger.debug("%r: %d trainable values", model, sum(t.size for t in model.parameters().values()))
        return model

    def parameters(self) -> dict:
        """Trainable tensors by name, in a fixed order."""
        params = {}
        prefix = "classifier.lstm." if self.cfg.classifier.kind == "many_to_many" else "pooling.lstm."
        for group, name in (
            (self.lstm, prefix),
            (self.cnn, "pooling.cnn."),
            (self.moe, "classifier.moe."),
            (self.mlp, "classifier.mlp."),
            (self.head, "classifier.head."),
        ):
            if group is not None:
                params.update(group.named(name))
        if self.correlation is not None:
            params["labelgraph.trainable"] = self.correlation.trainable
        if self.centers is not None:
            params["loss.centers"] = self.centers.centers
        return params

    def buffers(self) -> dict:
        """Frozen tensors by name."""
        if self.correlation is None:
            return {}
        return {"labelgraph.m": self.correlation.m}

    def state(self) -> dict:
        """Copies of all parameter and buffer values."""
        tensors = {**self.parameters(), **self.buffers()}
        return {name: t.values.copy() for name, t in tensors.items()}

    def load_state(self, state: dict) -> None:
        """Overwrite parameter and buffer values in place; names and shapes must match."""
        tensors = {**self.parameters(), **self.buffers()}
        if set(state) != set(tensors):
            missing = sorted(set(tensors) - set(state))
            extra = sorted(set(state) - set(tensors))
            raise ConfigError(f"state does not fit this pipeline: {missing=!r} {extra=!r}")
        for name, tensor in tensors.items():
            values = np.asarray(state[name], dtype=float)
            if values.shape != tensor.shape:
                raise DimensionError(
                    f"{name}: stored {shape_text(values.shape)}, pipeline {shape_text(tensor.shape)}"
                )
            tensor.values[...] = values

    def parameter_table(self) -> pyRestTable.Table:
        """Name, shape, and size of every trainable tensor."""
        table = pyRestTable.Table()
        table.labels = "parameter shape size".split()
        for name, tensor in self.parameters().items():
            table.addRow((name, shape_text(tensor.shape), tensor.size))
        return table

    def pool(self, seq, mode=Mode.EVAL, rng=None):
        """Pooled vector of ``seq`` from the configured encoder."""
        kind = self.cfg.pooling.kind
        if kind == "lstm":
            return encode_lstm(seq, self.lstm, self.lstm_options, rng, mode)
        if kind == "cnn":
            return encode_cnn(seq, self.cnn.w_conv, self.cnn.b_conv)
        if kind == "position":
            return encode_position(seq)
        if kind == "attention":
            return encode_self_attention(seq, self.cfg.pooling.attention_temperature)
        if kind == "noise":
            return encode_adaptive_noise(seq, self.stats, rng, mode)
        raise ConfigError(f"pooling.kind={kind!r} has no pooled vector")

    def forward(self, seq, mode=Mode.EVAL, rng=None):
        """
        Label-layer probabilities and the penultimate embedding of one video.

        ``rng`` supplies dropout masks and adaptive noise in training mode.
        """
        if seq.feature_dim != self.cfg.dims.feature_dim:
            raise DimensionError(
                f"{seq.video_id!r} has frame width {seq.feature_dim}, model expects {self.cfg.dims.feature_dim}"
            )
        kind = self.cfg.classifier.kind
        if kind == "many_to_many":
            pool = self.cfg.pooling
            probs, embedding = many_to_many_forward(
                seq, self.lstm, self.head, pool.layer_norm, pool.drop_prob, rng, mode
            )
        else:
            embedding = self.pool(seq, mode, rng)
            if kind == "moe":
                probs = moe_score(embedding, self.moe)
            elif kind == "moe2":
                probs = moe2_score(embedding, self.moe)
            else:
                probs, embedding = mlp_forward(embedding, self.mlp, self.cfg.classifier.layer_norm)
        if self.correlation is not None:
            g = self.cfg.labelgraph
            probs = apply_label_layer(probs, self.correlation, g.alpha, g.beta, g.gamma)
        return probs, embedding

    def loss(self, seq, mode=Mode.TRAIN, rng=None):
        """Configured loss of one video (scalar TensorBuffer)."""
        probs, embedding = self.forward(seq, mode, rng)
        return video_loss(probs, seq.labels, embedding, self.cfg.loss, self.centers)

    def predict(self, seq) -> np.ndarray:
        """Evaluation-mode probabilities, clipped to ``[0, 1]``."""
        probs, _ = self.forward(seq, Mode.EVAL)
        return np.clip(probs.values, 0.0, 1.0)
