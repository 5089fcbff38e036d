"""
Model configuration: one choice per pipeline component, plus sizes and training knobs.

Configuration files are YAML.  Every key has a default, so a file may give
only the keys that differ.  A key path such as ``pooling.kind`` addresses one
value; overrides and sweep candidates are written as ``{path: value}``.

EXAMPLE::

    pooling:
      kind: cnn
    dims:
      cnn_channels: 256
    loss:
      kind: huber_ce
      delta: 0.5

.. rubric:: Configuration
.. autosummary::
    ~ClassifierConfig
    ~Dims
    ~LabelGraphConfig
    ~ModelConfig
    ~PoolingConfig
    ~TrainingConfig

.. rubric:: Functions
.. autosummary::
    ~apply_overrides
    ~config_hash
    ~dump_config
    ~load_config
    ~load_dataset_spec
    ~parse_override
    ~preset
    ~sweep_base
    ~sweep_candidates
"""

import dataclasses
import hashlib
import logging
import pathlib

import yaml

from .classifier import CLASSIFIER_KINDS
from .core import ConfigError
from .core import miner
from .core import set_path
from .data import DatasetSpec
from .labelgraph import NORMALIZATIONS
from .loss import LossConfig
from .pooling import POOLING_KINDS

logger = logging.getLogger(__name__)

NO_POOLING = "none"
COMPONENTS = ("pooling", "classifier", "labelgraph", "loss")
_MISSING = object()


@dataclasses.dataclass
class PoolingConfig:
    """Video pooling layer; ``kind`` is ``none`` only for the many-to-many head."""

    kind: str = "lstm"
    use_input_sum: bool = True
    use_candidate_sum: bool = True
    layer_norm: bool = False
    drop_prob: float = 0.2
    cnn_window: int = 5
    attention_temperature: float = 1.0


@dataclasses.dataclass
class ClassifierConfig:
    """Classification layer."""

    kind: str = "moe2"
    layer_norm: bool = False


@dataclasses.dataclass
class LabelGraphConfig:
    """Label processing layer ``alpha O + beta M O + gamma M' O``."""

    enabled: bool = False
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    normalization: str = "ochiai"
    threshold: float = 0.0


@dataclasses.dataclass
class TrainingConfig:
    """Optimizer, schedule, and loop settings."""

    batch_size: int = 128
    epochs: int = 5
    learning_rate: float = 0.0006
    decay_rate: float = 0.95
    decay_interval: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eval_interval: int = 200
    eval_k: int = 20
    max_steps: int = 0
    merge_validation: bool = False


@dataclasses.dataclass
class Dims:
    """Sizes: frame width D, classes C, cell d, CNN channels, experts E, hidden h."""

    feature_dim: int = 64
    num_classes: int = 50
    cell_size: int = 64
    cnn_channels: int = 64
    num_experts: int = 2
    hidden: int = 256


_SECTIONS = {
    "pooling": PoolingConfig,
    "classifier": ClassifierConfig,
    "labelgraph": LabelGraphConfig,
    "loss": LossConfig,
    "training": TrainingConfig,
    "dims": Dims,
}


def _section(cls, raw, prefix):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"Section {prefix!r} must be a table, received {raw!r}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {[f'{prefix}.{k}' for k in unknown]!r}")
    return cls(**raw)


@dataclasses.dataclass
class ModelConfig:
    """
    Complete description of one model and how to train it.

    .. autosummary::
        ~from_dict
        ~to_dict
        ~validate
    """

    pooling: PoolingConfig = dataclasses.field(default_factory=PoolingConfig)
    classifier: ClassifierConfig = dataclasses.field(default_factory=ClassifierConfig)
    labelgraph: LabelGraphConfig = dataclasses.field(default_factory=LabelGraphConfig)
    loss: LossConfig = dataclasses.field(default_factory=LossConfig)
    training: TrainingConfig = dataclasses.field(default_factory=TrainingConfig)
    dims: Dims = dataclasses.field(default_factory=Dims)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        """Build from a (possibly partial) nested mapping."""
        raw = dict(raw or {})
        unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown!r}")
        sections = {name: _section(kind, raw.get(name), name) for name, kind in _SECTIONS.items()}
        return cls(seed=int(raw.get("seed", 0)), **sections)

    def to_dict(self) -> dict:
        """Nested plain mapping of every value."""
        return dataclasses.asdict(self)

    def validate(self) -> "ModelConfig":
        """Raise ConfigError for an invalid pipeline; return self otherwise."""
        p, c, g, t, d = self.pooling, self.classifier, self.labelgraph, self.training, self.dims
        if p.kind not in POOLING_KINDS + (NO_POOLING,):
            raise ConfigError(f"Unknown pooling.kind={p.kind!r}; choose from {POOLING_KINDS + (NO_POOLING,)}")
        if c.kind not in CLASSIFIER_KINDS:
            raise ConfigError(f"Unknown classifier.kind={c.kind!r}; choose from {CLASSIFIER_KINDS}")
        if (c.kind == "many_to_many") != (p.kind == NO_POOLING):
            raise ConfigError(
                f"classifier.kind={c.kind!r} with pooling.kind={p.kind!r}:"
                f" the many-to-many head reads frames directly and takes pooling.kind={NO_POOLING!r}"
            )
        if not 0.0 <= p.drop_prob < 1.0:
            raise ConfigError(f"pooling.drop_prob must be in [0, 1), received {p.drop_prob!r}")
        if p.cnn_window < 1 or p.attention_temperature <= 0:
            raise ConfigError("pooling.cnn_window must be >= 1 and pooling.attention_temperature > 0")
        for name in ("feature_dim", "num_classes", "cell_size", "cnn_channels", "num_experts", "hidden"):
            if getattr(d, name) < 1:
                raise ConfigError(f"dims.{name} must be >= 1, received {getattr(d, name)!r}")
        if (p.layer_norm or c.layer_norm) and min(d.cell_size, d.hidden) < 2:
            raise ConfigError("layer normalization needs dims.cell_size and dims.hidden >= 2")
        if g.normalization not in NORMALIZATIONS:
            raise ConfigError(
                f"Unknown labelgraph.normalization={g.normalization!r}; choose from {NORMALIZATIONS}"
            )
        if not 0.0 <= g.threshold <= 1.0:
            raise ConfigError(f"labelgraph.threshold must be in [0, 1], received {g.threshold!r}")
        self.loss.validate()
        if t.batch_size < 1 or t.epochs < 0 or t.max_steps < 0:
            raise ConfigError("training.batch_size must be >= 1, epochs and max_steps >= 0")
        if t.learning_rate <= 0 or not 0 < t.decay_rate <= 1 or t.decay_interval < 1:
            raise ConfigError("training needs learning_rate > 0, decay_rate in (0, 1], decay_interval >= 1")
        if t.eval_interval < 1 or t.eval_k < 1:
            raise ConfigError("training.eval_interval and training.eval_k must be >= 1")
        return self


def load_config(path) -> ModelConfig:
    """Read a YAML configuration file."""
    raw = yaml.safe_load(pathlib.Path(path).read_text())
    logger.debug("loaded configuration from %s", path)
    return ModelConfig.from_dict(raw or {})


def dump_config(cfg: ModelConfig, path) -> None:
    """Write ``cfg`` as YAML (every key, sorted)."""
    pathlib.Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


def config_hash(cfg: ModelConfig) -> str:
    """SHA-256 of the canonical YAML text of ``cfg``."""
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def apply_overrides(cfg: ModelConfig, overrides: dict) -> ModelConfig:
    """New configuration with ``{dotted.path: value}`` replacements."""
    raw = cfg.to_dict()
    for path, value in (overrides or {}).items():
        if miner(raw, path, _MISSING) is _MISSING:
            raise ConfigError(f"Unknown configuration key {path!r}")
        set_path(raw, path, value)
    return ModelConfig.from_dict(raw)


def parse_override(text: str) -> tuple:
    """Split ``path=value``; the value is read as YAML (``3``, ``true``, ``cnn``)."""
    path, sep, value = text.partition("=")
    if not sep or not path.strip():
        raise ConfigError(f"Override must look like 'path=value', received {text!r}")
    return path.strip(), yaml.safe_load(value)


def load_dataset_spec(path) -> DatasetSpec:
    """Read a YAML dataset recipe."""
    raw = yaml.safe_load(pathlib.Path(path).read_text())
    return DatasetSpec.from_dict(raw or {})


def _lstm(input_sum, candidate_sum, layer_norm=False):
    return {
        "pooling.kind": "lstm",
        "pooling.use_input_sum": input_sum,
        "pooling.use_candidate_sum": candidate_sum,
        "pooling.layer_norm": layer_norm,
    }


def _label_layer(alpha, beta, gamma):
    return {
        "labelgraph.enabled": True,
        "labelgraph.alpha": alpha,
        "labelgraph.beta": beta,
        "labelgraph.gamma": gamma,
    }


PRESETS = {
    "pooling": {
        "lstm": _lstm(False, False),
        "lstm-m": _lstm(True, False),
        "lstm-m-o": _lstm(True, True),
        "lstm-m-o-ln": _lstm(True, True, True),
        "cnn-64": {"pooling.kind": "cnn", "dims.cnn_channels": 64},
        "cnn-256": {"pooling.kind": "cnn", "dims.cnn_channels": 256},
        "cnn-1024": {"pooling.kind": "cnn", "dims.cnn_channels": 1024},
        "position-encoding": {"pooling.kind": "position"},
        "indirect-clustering": {"pooling.kind": "attention"},
        "adaptive-noise": {"pooling.kind": "noise"},
    },
    "classifier": {
        "many-to-many": {"pooling.kind": NO_POOLING, "classifier.kind": "many_to_many"},
        "moe-2": {"classifier.kind": "moe", "dims.num_experts": 2},
        "moe-16": {"classifier.kind": "moe", "dims.num_experts": 16},
        "2-layer-moe-2": {"classifier.kind": "moe2", "dims.num_experts": 2},
        "2-layer-moe-16": {"classifier.kind": "moe2", "dims.num_experts": 16},
        "3-layer-mlp": {"classifier.kind": "mlp", "classifier.layer_norm": False},
        "3-layer-mlp-ln": {"classifier.kind": "mlp", "classifier.layer_norm": True},
    },
    "labelgraph": {
        "label-1.0-0.3-0.0": _label_layer(1.0, 0.3, 0.0),
        "label-1.0-0.1-0.0": _label_layer(1.0, 0.1, 0.0),
        "label-1.0-0.0-0.1": _label_layer(1.0, 0.0, 0.1),
        "label-1.0-0.01-0.0": _label_layer(1.0, 0.01, 0.0),
        "label-1.0-0.0-0.01": _label_layer(1.0, 0.0, 0.01),
        "label-1.0-0.01-0.01": _label_layer(1.0, 0.01, 0.01),
    },
    "loss": {
        "ce": {"loss.kind": "ce"},
        "ce-center": {"loss.kind": "ce_center", "loss.center_weight": 0.001},
        "huber-0.5": {"loss.kind": "huber_ce", "loss.delta": 0.5},
        "huber-1": {"loss.kind": "huber_ce", "loss.delta": 1.0},
        "huber-2": {"loss.kind": "huber_ce", "loss.delta": 2.0},
        "huber-3": {"loss.kind": "huber_ce", "loss.delta": 3.0},
    },
}

# the pipeline held fixed while one component is swept
_MOE_16 = {"classifier.kind": "moe", "dims.num_experts": 16}
SWEEP_BASES = {
    "pooling": {"classifier.kind": "moe", "dims.num_experts": 2, "loss.kind": "ce", "labelgraph.enabled": False},
    "classifier": {"pooling.kind": "attention", "loss.kind": "ce", "labelgraph.enabled": False},
    "labelgraph": {"pooling.kind": "attention", **_MOE_16, "loss.kind": "ce"},
    "loss": {"pooling.kind": "attention", **_MOE_16, "labelgraph.enabled": False},
}


def _check_component(component):
    if component not in COMPONENTS:
        raise ConfigError(f"Unknown {component=!r}; choose from {COMPONENTS}")


def preset(name: str) -> dict:
    """Overrides of the named preset (any component)."""
    for table in PRESETS.values():
        if name in table:
            return dict(table[name])
    known = sorted(n for table in PRESETS.values() for n in table)
    raise ConfigError(f"Unknown preset {name!r}; choose from {known}")


def sweep_candidates(component: str) -> list:
    """``[(name, overrides), ...]`` of the presets for ``component``."""
    _check_component(component)
    return [(name, dict(overrides)) for name, overrides in PRESETS[component].items()]


def sweep_base(component: str, cfg: ModelConfig = None) -> ModelConfig:
    """``cfg`` (default: all defaults) with the rest of the pipeline fixed for a ``component`` sweep."""
    _check_component(component)
    return apply_overrides(cfg or ModelConfig(), SWEEP_BASES[component])
