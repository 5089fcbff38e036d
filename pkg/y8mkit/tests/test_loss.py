"""Test the loss module."""

from contextlib import nullcontext as does_not_raise

import numpy as np
import pytest

from ..core import ConfigError
from ..loss import CenterTable
from ..loss import EmptyLabelSet
from ..loss import LossConfig
from ..loss import bce_terms
from ..loss import center_loss
from ..loss import cross_entropy
from ..loss import joint_loss
from ..loss import label_vector
from ..loss import pseudo_huber
from ..loss import video_loss
from ..numerics import RngStream
from ..numerics import Tape
from ..numerics import TensorBuffer
from ..numerics import finite_diff_grad
from ..numerics import sum_


def grad_of(f, x):
    x.requires_grad = True
    x.zero_grad()
    with Tape() as tape:
        y = f(x)
    tape.backward(y)
    return x.grad


def test_label_vector():
    assert np.array_equal(label_vector([0, 2], 4), [1, 0, 1, 0])
    with pytest.raises(ValueError):
        label_vector([4], 4)


def test_cross_entropy_half():
    assert cross_entropy(TensorBuffer([0.5]), [0]).item() == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_perfect():
    eps = 1e-6
    probs = TensorBuffer([1 - eps, eps, eps, 1 - eps])
    loss = cross_entropy(probs, [0, 3], eps).item()
    assert 0 <= loss < 4 * 2 * eps


def test_cross_entropy_clamps():
    loss = cross_entropy(TensorBuffer([0.0, 1.0]), [1], 1e-6).item()
    assert np.isfinite(loss)
    loss = cross_entropy(TensorBuffer([1.0, 0.0]), [1], 1e-6).item()
    assert loss == pytest.approx(-2 * np.log(1e-6))


def test_cross_entropy_gradient():
    probs = TensorBuffer([0.2, 0.7, 0.45, 0.9])
    labels = [1, 3]
    analytic = grad_of(lambda p: cross_entropy(p, labels), probs)
    y = label_vector(labels, 4)
    assert np.allclose(analytic, -y / probs.values + (1 - y) / (1 - probs.values))
    numeric = finite_diff_grad(lambda p: cross_entropy(p, labels), probs).values
    assert np.allclose(analytic, numeric, rtol=1e-6)


def test_cross_entropy_monotone():
    grid = np.linspace(0.05, 0.95, 19)
    positive = [cross_entropy(TensorBuffer([p]), [0]).item() for p in grid]
    negative = [cross_entropy(TensorBuffer([p]), []).item() for p in grid]
    assert np.all(np.diff(positive) < 0)
    assert np.all(np.diff(negative) > 0)


def test_center_table_init():
    table = CenterTable.init(50, 40, RngStream(0))
    assert table.centers.shape == (50, 40)
    assert table.centers.requires_grad
    assert 0.08 < table.centers.values.std() < 0.12


@pytest.mark.parametrize(
    "embedding, labels, centers, expected",
    [
        [[1.0, 0.0], [0], [[1.0, 0.0]], 0.0],
        [[1.0, 0.0], [0], [[0.0, 0.0]], 1.0],
        [[0.0, 0.0], [0, 1], [[1.0, 0.0], [1.0, np.sqrt(2)]], 2.0],
    ],
)
def test_center_loss(embedding, labels, centers, expected):
    table = CenterTable(TensorBuffer(centers, requires_grad=True))
    assert center_loss(TensorBuffer(embedding), labels, table).item() == pytest.approx(expected)


def test_center_loss_errors():
    table = CenterTable(TensorBuffer(np.zeros((2, 3))))
    with pytest.raises(EmptyLabelSet):
        center_loss(TensorBuffer(np.zeros(3)), [], table)
    with pytest.raises(ValueError):
        center_loss(TensorBuffer(np.zeros(2)), [0], table)
    with pytest.raises(ValueError):
        center_loss(TensorBuffer(np.zeros(3)), [2], table)


def test_center_loss_moves_centers():
    table = CenterTable(TensorBuffer([[0.0, 0.0], [3.0, 3.0], [5.0, 5.0]], requires_grad=True))
    embedding = TensorBuffer([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = center_loss(embedding, [0, 1], table)
    tape.backward(loss)
    assert np.array_equal(table.centers.grad[2], [0.0, 0.0])  # not selected
    before = center_loss(embedding, [0, 1], table).item()
    table.centers.values -= 0.1 * table.centers.grad
    assert center_loss(embedding, [0, 1], table).item() < before
    assert embedding.grad is not None


def test_joint_loss():
    assert joint_loss(TensorBuffer(0.8), TensorBuffer(100.0), 0.001).item() == pytest.approx(0.9)
    ce = TensorBuffer(0.8)
    assert joint_loss(ce, TensorBuffer(100.0), 0.0) is ce

    a = TensorBuffer(0.8, requires_grad=True)
    b = TensorBuffer(100.0, requires_grad=True)
    with Tape() as tape:
        total = joint_loss(a, b, 0.5)
    tape.backward(total)
    assert float(a.grad) == pytest.approx(1.0)
    assert float(b.grad) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "ce, delta, expected, tol",
    [
        [0.0, 0.5, 0.0, 0.0],
        [0.0, 3.0, 0.0, 0.0],
        [np.sqrt(3), 1.0, 1.0, 1e-12],
        [0.01, 2.0, 5e-5, 1e-9],
    ],
)
def test_pseudo_huber_values(ce, delta, expected, tol):
    assert abs(pseudo_huber(TensorBuffer(ce), delta).item() - expected) <= tol


@pytest.mark.parametrize(
    "delta, context",
    [
        [1.0, does_not_raise()],
        [0.0, pytest.raises(ConfigError)],
        [-1.0, pytest.raises(ConfigError)],
    ],
)
def test_pseudo_huber_delta(delta, context):
    with context:
        pseudo_huber(TensorBuffer(1.0), delta)


@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0, 3.0])
def test_pseudo_huber_bounds(delta):
    ce = np.random.default_rng(int(delta * 10)).uniform(0, 20, size=1000)
    loss = pseudo_huber(TensorBuffer(ce), delta).values
    assert np.all(loss >= 0)
    assert np.all(loss <= ce**2 / 2 + 1e-12)
    order = np.argsort(ce)
    assert np.all(np.diff(loss[order]) >= 0)
    # asymptotic slope delta
    far = pseudo_huber(TensorBuffer([1e6, 1e6 + 1]), delta).values
    assert far[1] - far[0] == pytest.approx(delta, rel=1e-6)


def test_pseudo_huber_deltas_distinct():
    values = {pseudo_huber(TensorBuffer(2.0), delta).item() for delta in (0.5, 1.0, 2.0, 3.0)}
    assert len(values) == 4


def test_pseudo_huber_gradient():
    ce = TensorBuffer([0.3, 1.7, 4.0])
    analytic = grad_of(lambda x: sum_(pseudo_huber(x, 0.5)), ce)
    numeric = finite_diff_grad(lambda x: sum_(pseudo_huber(x, 0.5)), ce).values
    assert np.allclose(analytic, numeric, rtol=1e-6)
    assert np.allclose(analytic, ce.values / np.sqrt(1 + (ce.values / 0.5) ** 2))


@pytest.mark.parametrize(
    "cfg, context",
    [
        [LossConfig(), does_not_raise()],
        [LossConfig(kind="huber_ce", delta=0.5), does_not_raise()],
        [LossConfig(kind="huber_ce", delta=0.0), pytest.raises(ConfigError)],
        [LossConfig(kind="ce_center", center_weight=-1), pytest.raises(ConfigError)],
        [LossConfig(kind="focal"), pytest.raises(ConfigError)],
        [LossConfig(clamp_eps=0.7), pytest.raises(ConfigError)],
    ],
)
def test_loss_config(cfg, context):
    with context:
        cfg.validate()


def test_video_loss_kinds():
    probs = TensorBuffer([0.2, 0.7, 0.45])
    labels = (1,)
    embedding = TensorBuffer([1.0, 0.0])
    table = CenterTable(TensorBuffer(np.zeros((3, 2))))
    ce = cross_entropy(probs, labels).item()

    assert video_loss(probs, labels, embedding, LossConfig()).item() == ce
    joint = video_loss(probs, labels, embedding, LossConfig("ce_center", center_weight=0.5), table).item()
    assert joint == pytest.approx(ce + 0.5)
    wrapped = video_loss(probs, labels, embedding, LossConfig("huber_ce", delta=1.0)).item()
    assert wrapped == pytest.approx(np.sqrt(1 + ce**2) - 1)
    per_class = video_loss(probs, labels, embedding, LossConfig("huber_ce", delta=1.0, huber_per_class=True))
    terms = bce_terms(probs, labels).values
    assert per_class.item() == pytest.approx(np.sum(np.sqrt(1 + terms**2) - 1))
    # no labels: the center term is skipped
    assert video_loss(probs, (), embedding, LossConfig("ce_center"), table).item() == pytest.approx(
        cross_entropy(probs, ()).item()
    )
