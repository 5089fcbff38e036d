"""Test the synthetic dataset generator and the Y8MS files."""

import struct
from contextlib import nullcontext as does_not_raise

import numpy as np
import pytest

from ..core import ConfigError
from ..data import MAGIC
from ..data import SPEC_FILE
from ..data import DataError
from ..data import Dataset
from ..data import DatasetSpec
from ..data import FormatError
from ..data import generate_dataset
from ..data import label_stats
from ..data import read_dataset
from ..data import read_split
from ..data import write_dataset
from ..data import write_splits
from ..data import write_stats_csv
from ..labelgraph import build_cooccurrence
from ._core import make_dataset
from ._core import tiny_spec
from ._core import yaml_loader


def all_videos(splits):
    return [video for name in ("train", "validate", "test") for video in splits[name]]


def same_videos(a: Dataset, b: Dataset) -> bool:
    return (a.num_classes, a.feature_dim, len(a)) == (b.num_classes, b.feature_dim, len(b)) and all(
        u.video_id == v.video_id and u.labels == v.labels and np.array_equal(u.frames.values, v.frames.values)
        for u, v in zip(a, b)
    )


def test_spec_defaults():
    spec = DatasetSpec()
    assert (spec.num_videos, spec.num_classes, spec.feature_dim) == (5000, 50, 64)
    assert (spec.min_frames, spec.max_frames, spec.num_label_groups) == (5, 30, 10)
    assert spec.imbalance_exponent == 1.0
    assert spec.l2_normalize
    spec.validate()
    assert (spec.num_train, spec.num_validate) == (4000, 500)


@pytest.mark.parametrize(
    "changes, context",
    [
        [{}, does_not_raise()],
        [{"min_frames": 4}, pytest.raises(ConfigError)],
        [{"max_frames": 4, "min_frames": 5}, pytest.raises(ConfigError)],
        [{"num_label_groups": 7}, pytest.raises(ConfigError)],
        [{"num_label_groups": 0}, pytest.raises(ConfigError)],
        [{"imbalance_exponent": -0.5}, pytest.raises(ConfigError)],
        [{"noise_sigma": -1}, pytest.raises(ConfigError)],
        [{"audio_dim": 8}, pytest.raises(ConfigError)],
        [{"max_labels": 0}, pytest.raises(ConfigError)],
        [{"main_scene_min": 0.4}, pytest.raises(ConfigError)],
        [{"cross_group_prob": 1.5}, pytest.raises(ConfigError)],
        [{"train_fraction": 0.0}, pytest.raises(ConfigError)],
        [{"train_fraction": 0.9, "validate_fraction": 0.2}, pytest.raises(ConfigError)],
        [{"num_videos": 5}, pytest.raises(ConfigError)],
    ],
)
def test_spec_validate(changes, context):
    with context:
        tiny_spec(**changes).validate()


def test_spec_from_dict():
    spec = DatasetSpec.from_dict({"num_videos": 10, "seed": 3})
    assert spec.num_videos == 10
    assert spec.num_classes == 50
    assert DatasetSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError) as exinfo:
        DatasetSpec.from_dict({"num_video": 10})
    assert "num_video" in str(exinfo.value)


def test_generate_shapes(tiny_splits):
    spec = tiny_spec()
    assert [len(tiny_splits[name]) for name in ("train", "validate", "test")] == [84, 18, 18]
    videos = all_videos(tiny_splits)
    assert [v.video_id for v in videos] == [f"v{i:06d}" for i in range(spec.num_videos)]
    for video in videos:
        assert spec.min_frames <= video.num_frames <= spec.max_frames
        assert video.feature_dim == spec.feature_dim
        assert 1 <= len(video.labels) <= spec.max_labels
        assert all(0 <= y < spec.num_classes for y in video.labels)


def test_generate_deterministic(tmp_path, tiny_splits):
    again = generate_dataset(tiny_spec())
    for name, dataset in tiny_splits.items():
        assert same_videos(dataset, again[name])

    first = write_splits(tiny_splits, tmp_path / "a", tiny_spec())
    second = write_splits(again, tmp_path / "b", tiny_spec())
    for name in ("train.y8ms", "validate.y8ms", "test.y8ms", SPEC_FILE):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_generate_seed_matters(tiny_splits):
    other = generate_dataset(tiny_spec(seed=8))
    assert not same_videos(tiny_splits["train"], other["train"])


def test_every_class_trained(tiny_splits):
    stats = label_stats(tiny_splits["train"])
    assert np.all(stats.counts >= 1)
    for y in range(tiny_spec().num_classes):
        assert y in tiny_splits["train"][y].labels


def test_normalized_frames(tiny_splits):
    for video in tiny_splits["train"]:
        frames = video.frames.values
        assert np.all(np.isfinite(frames))
        assert np.allclose(np.linalg.norm(frames[:, :6], axis=1), 1.0, atol=1e-6)
        assert np.allclose(np.linalg.norm(frames[:, 6:], axis=1), 1.0, atol=1e-6)


def test_frame_bound():
    spec = tiny_spec(l2_normalize=False, noise_sigma=0.1)
    for video in all_videos(generate_dataset(spec)):
        assert np.max(np.abs(video.frames.values)) <= 1.0 + 6 * spec.noise_sigma


def test_uniform_classes():
    spec = tiny_spec(num_videos=1200, imbalance_exponent=0.0, max_labels=1, train_fraction=0.5)
    stats = label_stats(Dataset(spec.num_classes, spec.feature_dim, all_videos(generate_dataset(spec))[6:]))
    n = stats.num_videos
    p = 1 / spec.num_classes
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(stats.counts - n * p) <= 4 * sigma)


def test_imbalanced_groups():
    spec = tiny_spec(num_videos=1200, imbalance_exponent=1.0, max_labels=1, train_fraction=0.5)
    stats = label_stats(Dataset(spec.num_classes, spec.feature_dim, all_videos(generate_dataset(spec))[6:]))
    per_group = stats.counts.reshape(3, 2).sum(axis=1)
    assert per_group[0] > per_group[1] > per_group[2]


def test_singleton_groups():
    spec = tiny_spec(num_label_groups=6)
    counts = build_cooccurrence(Dataset(6, 8, all_videos(generate_dataset(spec)))).counts
    assert np.array_equal(counts, np.diag(np.diag(counts)))


def test_block_diagonal(tiny_splits):
    counts = build_cooccurrence(tiny_splits["train"]).counts
    groups = np.repeat(np.arange(3), 2)
    off_group = groups[:, None] != groups[None, :]
    assert np.all(counts[off_group] == 0)
    assert np.any(counts[~off_group & ~np.eye(6, dtype=bool)] > 0)


def test_cross_group_labels():
    spec = tiny_spec(cross_group_prob=1.0, max_labels=1)
    videos = all_videos(generate_dataset(spec))
    assert all(len(v.labels) == 2 for v in videos)


@pytest.mark.parametrize(
    "label_sets, expected",
    [
        [[(0, 1), (0,)], {0: 2, 1: 1}],
        [[(2,), (2,), (0, 2)], {0: 1, 2: 3}],
        [[], {}],
    ],
)
def test_label_stats(label_sets, expected):
    stats = label_stats(make_dataset(label_sets, 3))
    assert stats.table() == expected
    assert stats.num_videos == len(label_sets)
    assert stats.counts.sum() == sum(len(s) for s in label_sets)
    assert stats.count(9) == 0


def test_label_stats_match_cooccurrence(tiny_splits):
    stats = label_stats(tiny_splits["train"])
    assert np.array_equal(stats.counts, build_cooccurrence(tiny_splits["train"]).diagonal())


def test_label_stats_range():
    with pytest.raises(DataError):
        label_stats(make_dataset([(0, 3)], 3))


def test_round_trip(tmp_path, tiny_splits):
    path = tmp_path / "train.y8ms"
    write_dataset(tiny_splits["train"], path)
    assert same_videos(read_dataset(path), tiny_splits["train"])


def test_round_trip_empty(tmp_path):
    path = tmp_path / "empty.y8ms"
    write_dataset(Dataset(4, 3), path)
    assert path.read_bytes() == MAGIC + struct.pack("<BII", 1, 4, 3)
    dataset = read_dataset(path)
    assert (dataset.num_classes, dataset.feature_dim, len(dataset)) == (4, 3, 0)


def test_write_width_mismatch(tmp_path):
    dataset = make_dataset([(0,)], 2, width=3)
    dataset.feature_dim = 4
    with pytest.raises(DataError):
        write_dataset(dataset, tmp_path / "bad.y8ms")


@pytest.mark.parametrize(
    "corrupt, offset",
    [
        [lambda data: b"Y8MX" + data[4:], 0],
        [lambda data: data[:4] + b"\x02" + data[5:], 4],
        [lambda data: data[:7], 5],
        [lambda data: data[:-3], None],
        [lambda data: data + b"\x01\x00", None],
    ],
)
def test_read_errors(tmp_path, corrupt, offset):
    source = tmp_path / "good.y8ms"
    write_dataset(make_dataset([(0,), (1,)], 2, width=2, frames=5), source)
    path = tmp_path / "bad.y8ms"
    path.write_bytes(corrupt(source.read_bytes()))
    with pytest.raises(FormatError) as exinfo:
        read_dataset(path)
    assert exinfo.value.offset is not None
    assert "byte offset" in str(exinfo.value)
    if offset is not None:
        assert exinfo.value.offset == offset


def test_read_split(data_dir, tiny_splits):
    assert same_videos(read_split(data_dir, "validate"), tiny_splits["validate"])
    assert yaml_loader(data_dir / SPEC_FILE) == tiny_spec().to_dict()
    with pytest.raises(DataError):
        read_split(data_dir, "holdout")


def test_stats_csv(tmp_path):
    dataset = make_dataset([(0, 1), (0,), (2,)], 3)
    stats_path, pairs_path = write_stats_csv(
        label_stats(dataset), build_cooccurrence(dataset).counts, tmp_path / "stats"
    )
    assert stats_path.read_text() == "ClassId,Count\n0,2\n1,1\n2,1\n"
    assert pairs_path.read_text() == "ClassA,ClassB,Count\n0,0,2\n0,1,1\n1,1,1\n2,2,1\n"
