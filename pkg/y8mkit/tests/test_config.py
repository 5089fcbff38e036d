"""Test the model configuration and the presets."""

from contextlib import nullcontext as does_not_raise

import pytest

from ..config import COMPONENTS
from ..config import PRESETS
from ..config import ModelConfig
from ..config import apply_overrides
from ..config import config_hash
from ..config import dump_config
from ..config import load_config
from ..config import load_dataset_spec
from ..config import parse_override
from ..config import preset
from ..config import sweep_base
from ..config import sweep_candidates
from ..core import ConfigError
from ._core import yaml_loader


def test_defaults():
    cfg = ModelConfig()
    assert (cfg.pooling.kind, cfg.classifier.kind, cfg.loss.kind) == ("lstm", "moe2", "ce")
    assert not cfg.labelgraph.enabled
    assert (cfg.labelgraph.alpha, cfg.labelgraph.beta, cfg.labelgraph.gamma) == (1.0, 0.0, 0.0)
    t = cfg.training
    assert (t.batch_size, t.learning_rate, t.decay_rate) == (128, 0.0006, 0.95)
    assert (t.beta1, t.beta2, t.epsilon) == (0.9, 0.999, 1e-8)
    assert t.eval_k == 20
    assert (cfg.loss.center_weight, cfg.loss.delta) == (0.001, 1.0)
    d = cfg.dims
    assert (d.feature_dim, d.num_classes, d.cell_size, d.hidden, d.num_experts) == (64, 50, 64, 256, 2)
    assert cfg.validate() is cfg


def test_from_dict_partial():
    cfg = ModelConfig.from_dict({"pooling": {"kind": "cnn"}, "dims": {"cnn_channels": 8}, "seed": 4})
    assert cfg.pooling.kind == "cnn"
    assert cfg.pooling.cnn_window == 5
    assert cfg.dims.cnn_channels == 8
    assert cfg.dims.num_classes == 50
    assert cfg.seed == 4
    assert ModelConfig.from_dict(None) == ModelConfig()
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "raw, text",
    [
        [{"poolin": {}}, "poolin"],
        [{"pooling": {"knd": "cnn"}}, "pooling.knd"],
        [{"loss": {"delta": 1, "lambda": 2}}, "loss.lambda"],
        [{"training": 5}, "training"],
    ],
)
def test_from_dict_unknown(raw, text):
    with pytest.raises(ConfigError) as exinfo:
        ModelConfig.from_dict(raw)
    assert text in str(exinfo.value)


@pytest.mark.parametrize(
    "overrides, context",
    [
        [{}, does_not_raise()],
        [{"pooling.kind": "transformer"}, pytest.raises(ConfigError)],
        [{"classifier.kind": "svm"}, pytest.raises(ConfigError)],
        [{"classifier.kind": "many_to_many"}, pytest.raises(ConfigError)],
        [{"pooling.kind": "none"}, pytest.raises(ConfigError)],
        [{"pooling.kind": "none", "classifier.kind": "many_to_many"}, does_not_raise()],
        [{"pooling.drop_prob": 1.0}, pytest.raises(ConfigError)],
        [{"pooling.attention_temperature": 0.0}, pytest.raises(ConfigError)],
        [{"dims.num_experts": 0}, pytest.raises(ConfigError)],
        [{"classifier.layer_norm": True, "dims.hidden": 1}, pytest.raises(ConfigError)],
        [{"labelgraph.normalization": "cosine"}, pytest.raises(ConfigError)],
        [{"labelgraph.threshold": 2.0}, pytest.raises(ConfigError)],
        [{"loss.kind": "huber_ce", "loss.delta": 0.0}, pytest.raises(ConfigError)],
        [{"training.batch_size": 0}, pytest.raises(ConfigError)],
        [{"training.decay_rate": 1.5}, pytest.raises(ConfigError)],
        [{"training.eval_k": 0}, pytest.raises(ConfigError)],
        [{"training.epochs": 0}, does_not_raise()],
    ],
)
def test_validate(overrides, context):
    with context:
        apply_overrides(ModelConfig(), overrides).validate()


def test_apply_overrides():
    cfg = ModelConfig()
    changed = apply_overrides(cfg, {"pooling.kind": "cnn", "seed": 9})
    assert (changed.pooling.kind, changed.seed) == ("cnn", 9)
    assert (cfg.pooling.kind, cfg.seed) == ("lstm", 0)
    for path in ("pooling.kernel", "dimz", "pooling.kind.name", "nothing.at.all"):
        with pytest.raises(ConfigError):
            apply_overrides(cfg, {path: 1})


def test_config_hash():
    cfg = ModelConfig()
    assert config_hash(cfg) == config_hash(ModelConfig())
    assert len(config_hash(cfg)) == 64
    assert config_hash(cfg) != config_hash(apply_overrides(cfg, {"dims.hidden": 65}))


def test_load_dump(tmp_path):
    cfg = apply_overrides(ModelConfig(), {"loss.kind": "huber_ce", "loss.delta": 0.5})
    path = tmp_path / "config.yml"
    dump_config(cfg, path)
    assert yaml_loader(path)["loss"]["delta"] == 0.5
    assert load_config(path) == cfg

    path.write_text("pooling:\n  kind: attention\n")
    assert load_config(path).pooling.kind == "attention"
    path.write_text("")
    assert load_config(path) == ModelConfig()


@pytest.mark.parametrize(
    "text, expected",
    [
        ["pooling.kind=cnn", ("pooling.kind", "cnn")],
        ["dims.hidden=16", ("dims.hidden", 16)],
        ["labelgraph.enabled=true", ("labelgraph.enabled", True)],
        [" loss.delta = 0.5", ("loss.delta", 0.5)],
    ],
)
def test_parse_override(text, expected):
    assert parse_override(text) == expected


@pytest.mark.parametrize("text", ["pooling.kind", "=cnn"])
def test_parse_override_errors(text):
    with pytest.raises(ConfigError):
        parse_override(text)


@pytest.mark.parametrize("component, count", [["pooling", 10], ["classifier", 7], ["labelgraph", 6], ["loss", 6]])
def test_sweep_candidates(component, count):
    candidates = sweep_candidates(component)
    assert len(candidates) == count
    base = sweep_base(component)
    for _name, overrides in candidates:
        apply_overrides(base, overrides).validate()


@pytest.mark.parametrize(
    "component, pooling, classifier, experts, labelgraph",
    [
        ["pooling", "lstm", "moe", 2, False],
        ["classifier", "attention", "moe2", 2, False],
        ["labelgraph", "attention", "moe", 16, False],
        ["loss", "attention", "moe", 16, False],
    ],
)
def test_sweep_base_pipeline(component, pooling, classifier, experts, labelgraph):
    cfg = sweep_base(component)
    assert cfg.pooling.kind == pooling
    assert cfg.classifier.kind == classifier
    assert cfg.dims.num_experts == experts
    assert cfg.labelgraph.enabled is labelgraph
    assert cfg.loss.kind == "ce"
    assert cfg.validate() is cfg


def test_sweep_base():
    assert sweep_base("loss", ModelConfig(seed=3)).seed == 3
    with pytest.raises(ConfigError):
        sweep_base("optimizer")
    with pytest.raises(ConfigError):
        sweep_candidates("optimizer")


def test_presets():
    assert set(PRESETS) == set(COMPONENTS)
    assert preset("huber-0.5") == {"loss.kind": "huber_ce", "loss.delta": 0.5}
    assert preset("lstm-m-o")["pooling.use_candidate_sum"] is True
    with pytest.raises(ConfigError):
        preset("cnn-2048")


def test_load_dataset_spec(tmp_path):
    path = tmp_path / "spec.yml"
    path.write_text("num_videos: 300\nnum_classes: 12\n")
    spec = load_dataset_spec(path)
    assert (spec.num_videos, spec.num_classes, spec.feature_dim) == (300, 12, 64)
    path.write_text("videos: 300\n")
    with pytest.raises(ConfigError):
        load_dataset_spec(path)
