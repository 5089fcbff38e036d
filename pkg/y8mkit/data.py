"""
Synthetic multi-label video datasets, their binary files, and label statistics.

Generated data imitates the structure of a large video corpus: classes come in
correlated groups, group popularity follows a power law (label imbalance),
and every video shows a "main scene" drawn from its primary label.

.. rubric:: Types
.. autosummary::
    ~Dataset
    ~DatasetSpec
    ~LabelStats

.. rubric:: Functions
.. autosummary::
    ~generate_dataset
    ~label_stats
    ~read_dataset
    ~read_split
    ~write_dataset
    ~write_splits
    ~write_stats_csv

.. rubric:: Exceptions
.. autosummary::
    ~DataError
    ~FormatError
"""

import csv
import dataclasses
import logging
import pathlib
import struct

import numpy as np
import yaml

from .core import ConfigError
from .core import Y8mException
from .numerics import RngStream
from .numerics import TensorBuffer
from .pooling import FeatureSequence

logger = logging.getLogger(__name__)

MAGIC = b"Y8MS"
VERSION = 1
SPLITS = ("train", "validate", "test")
SUFFIX = ".y8ms"
SPEC_FILE = "dataset_spec.yml"


class DataError(Y8mException, ValueError):
    """Dataset content is inconsistent (for example, a label out of range)."""


class FormatError(Y8mException, ValueError):
    """Binary file does not follow the expected layout."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


@dataclasses.dataclass
class DatasetSpec:
    """
    Recipe for a synthetic dataset.

    ``feature_dim`` (D) includes the ``audio_dim`` trailing audio features.
    """

    num_videos: int = 5000
    num_classes: int = 50
    feature_dim: int = 64
    audio_dim: int = 16
    min_frames: int = 5
    max_frames: int = 30
    num_label_groups: int = 10
    imbalance_exponent: float = 1.0
    noise_sigma: float = 0.05
    seed: int = 0
    max_labels: int = 4
    main_scene_min: float = 0.5
    main_scene_max: float = 0.8
    cross_group_prob: float = 0.0
    train_fraction: float = 0.8
    validate_fraction: float = 0.1
    l2_normalize: bool = True

    def validate(self) -> None:
        """Raise ConfigError when the recipe cannot be honored."""
        problems = []
        if self.min_frames < 5:
            problems.append(f"min_frames={self.min_frames} < 5 (convolution window)")
        if self.max_frames < self.min_frames:
            problems.append(f"max_frames={self.max_frames} < min_frames={self.min_frames}")
        if not 1 <= self.num_label_groups <= self.num_classes:
            problems.append(f"num_label_groups={self.num_label_groups} not in [1, num_classes={self.num_classes}]")
        if self.imbalance_exponent < 0:
            problems.append(f"imbalance_exponent={self.imbalance_exponent} < 0")
        if self.noise_sigma < 0:
            problems.append(f"noise_sigma={self.noise_sigma} < 0")
        if not 0 <= self.audio_dim < self.feature_dim:
            problems.append(f"audio_dim={self.audio_dim} not in [0, feature_dim={self.feature_dim})")
        if self.max_labels < 1:
            problems.append(f"max_labels={self.max_labels} < 1")
        if not 0.5 <= self.main_scene_min <= self.main_scene_max <= 1.0:
            problems.append("main scene fractions must satisfy 0.5 <= min <= max <= 1")
        if not 0.0 <= self.cross_group_prob <= 1.0:
            problems.append(f"cross_group_prob={self.cross_group_prob} not in [0, 1]")
        if self.train_fraction <= 0 or self.validate_fraction < 0:
            problems.append("split fractions must be non-negative, train positive")
        if self.train_fraction + self.validate_fraction > 1.0:
            problems.append("train_fraction + validate_fraction > 1")
        if self.num_train < self.num_classes:
            problems.append(f"{self.num_train} training videos cannot cover {self.num_classes} classes")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def num_train(self) -> int:
        """Videos in the training split."""
        return int(round(self.num_videos * self.train_fraction))

    @property
    def num_validate(self) -> int:
        """Videos in the validation split."""
        return int(round(self.num_videos * self.validate_fraction))

    @classmethod
    def from_dict(cls, raw: dict) -> "DatasetSpec":
        """Build from a (possibly partial) mapping."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"Unknown dataset spec keys: {unknown!r}")
        return cls(**raw)

    def to_dict(self) -> dict:
        """Plain mapping of all fields."""
        return dataclasses.asdict(self)


@dataclasses.dataclass
class Dataset:
    """Videos sharing a class count C and frame width D."""

    num_classes: int
    feature_dim: int
    videos: list = dataclasses.field(default_factory=list)

    def __iter__(self):
        return iter(self.videos)

    def __len__(self) -> int:
        return len(self.videos)

    def __getitem__(self, index):
        return self.videos[index]

    def check_labels(self) -> None:
        """Raise DataError for any label outside ``[0, C)``."""
        for video in self.videos:
            bad = [y for y in video.labels if not 0 <= y < self.num_classes]
            if bad:
                raise DataError(f"{video.video_id!r}: labels {bad!r} outside [0, {self.num_classes})")


@dataclasses.dataclass
class LabelStats:
    """
    Per-class example counts S(y).

    .. autosummary::
        ~count
        ~table
    """

    counts: np.ndarray
    num_videos: int = 0

    def count(self, label: int) -> int:
        """S(label); zero for unseen or out-of-range labels."""
        if 0 <= label < len(self.counts):
            return int(self.counts[label])
        return 0

    def table(self) -> dict:
        """``{class_id: count}`` for every class seen at least once."""
        return {int(k): int(n) for k, n in enumerate(self.counts) if n > 0}


def label_stats(dataset: Dataset) -> LabelStats:
    """Count the videos carrying each label."""
    dataset.check_labels()
    counts = np.zeros(dataset.num_classes, dtype=np.int64)
    for video in dataset:
        counts[list(video.labels)] += 1
    return LabelStats(counts, len(dataset))


def _unit(vectors):
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.where(norms > 0, norms, 1.0)


class _Prototypes:
    """Class prototypes (frame and audio parts) built around group prototypes."""

    def __init__(self, spec: DatasetSpec, groups, rng):
        gen = rng.generator()
        frame_dim = spec.feature_dim - spec.audio_dim
        self.frame = self._build(gen, groups, spec.num_classes, frame_dim)
        self.audio = self._build(gen, groups, spec.num_classes, spec.audio_dim)

    @staticmethod
    def _build(gen, groups, num_classes, width):
        if width == 0:
            return np.zeros((num_classes, 0))
        centers = _unit(gen.standard_normal((len(groups), width)))
        offsets = _unit(gen.standard_normal((num_classes, width)))
        protos = np.zeros((num_classes, width))
        for g, members in enumerate(groups):
            protos[members] = _unit(0.6 * centers[g] + 0.8 * offsets[members])
        return protos


def _draw_labels(gen, spec, groups, popularity, forced=None):
    """Primary label first, then the remaining labels of the video."""
    if forced is None:
        group = int(gen.choice(len(groups), p=popularity))
        primary = int(gen.choice(groups[group]))
    else:
        primary = forced
        group = next(g for g, members in enumerate(groups) if primary in members)
    members = groups[group]
    count = int(gen.integers(1, min(spec.max_labels, len(members)) + 1))
    others = [int(y) for y in members if y != primary]
    labels = [primary]
    if count > 1:
        labels += [int(y) for y in gen.choice(others, size=count - 1, replace=False)]
    if len(groups) > 1 and gen.random() < spec.cross_group_prob:
        other_group = int(gen.choice([g for g in range(len(groups)) if g != group]))
        labels.append(int(gen.choice(groups[other_group])))
    return labels


def _draw_frames(gen, spec, protos, labels):
    """Main-scene segment from the primary label; other frames from any label."""
    steps = int(gen.integers(spec.min_frames, spec.max_frames + 1))
    fraction = gen.uniform(spec.main_scene_min, spec.main_scene_max)
    main = min(steps, int(np.ceil(steps * fraction)))
    start = int(gen.integers(0, steps - main + 1))
    source = np.asarray(gen.choice(labels, size=steps))
    source[start : start + main] = labels[0]

    frame_part = protos.frame[source] + spec.noise_sigma * gen.standard_normal(protos.frame[source].shape)
    audio_part = protos.audio[source] + spec.noise_sigma * gen.standard_normal(protos.audio[source].shape)
    if spec.l2_normalize:
        frame_part = _unit(frame_part)
        audio_part = _unit(audio_part) if spec.audio_dim else audio_part
    frames = np.concatenate([frame_part, audio_part], axis=1)
    return frames.astype(np.float32).astype(np.float64)  # stored precision


def generate_dataset(spec: DatasetSpec) -> dict:
    """
    Generate the train, validate, and test splits described by ``spec``.

    The first C training videos carry classes 0..C-1 as primary label so that
    every class has at least one training example.  Each video draws from its
    own sub-stream, so the result depends only on ``spec``.

    Returns ``{split name: Dataset}``.
    """
    spec.validate()
    rng = RngStream(spec.seed, labels=("dataset",))
    groups = [list(map(int, g)) for g in np.array_split(np.arange(spec.num_classes), spec.num_label_groups)]
    ranks = np.arange(1, len(groups) + 1, dtype=float)
    popularity = ranks ** (-spec.imbalance_exponent)
    popularity /= popularity.sum()
    protos = _Prototypes(spec, groups, rng.derive("prototypes"))

    bounds = {
        "train": (0, spec.num_train),
        "validate": (spec.num_train, spec.num_train + spec.num_validate),
        "test": (spec.num_train + spec.num_validate, spec.num_videos),
    }
    splits = {}
    for name in SPLITS:
        first, last = bounds[name]
        videos = []
        for index in range(first, last):
            gen = rng.derive(f"video/{index}").generator()
            forced = index if index < spec.num_classes else None
            labels = _draw_labels(gen, spec, groups, popularity, forced)
            frames = _draw_frames(gen, spec, protos, labels)
            videos.append(FeatureSequence(TensorBuffer(frames), labels, f"v{index:06d}"))
        splits[name] = Dataset(spec.num_classes, spec.feature_dim, videos)
        logger.info("generated %s split: %d videos", name, len(videos))
    return splits


def write_dataset(dataset: Dataset, path) -> None:
    """
    Write ``dataset`` in the Y8MS binary layout.

    Header: magic, version byte, C and D (uint32 LE).  Per video: id length
    and UTF-8 id, label count and uint32 labels, T, then ``T * D`` float32 LE.
    """
    chunks = [MAGIC, struct.pack("<BII", VERSION, dataset.num_classes, dataset.feature_dim)]
    for video in dataset:
        if video.feature_dim != dataset.feature_dim:
            raise DataError(f"{video.video_id!r} has width {video.feature_dim}, dataset {dataset.feature_dim}")
        ident = video.video_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(ident)) + ident)
        chunks.append(struct.pack("<I", len(video.labels)) + np.asarray(video.labels, dtype="<u4").tobytes())
        chunks.append(struct.pack("<I", video.num_frames) + video.frames.values.astype("<f4").tobytes())
    pathlib.Path(path).write_bytes(b"".join(chunks))


class _Cursor:
    """Bounds-checked reads from a byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.offset)
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def uint32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.data)


def read_dataset(path) -> Dataset:
    """Read a Y8MS file written by :func:`write_dataset`."""
    cursor = _Cursor(pathlib.Path(path).read_bytes())
    if cursor.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError(f"{str(path)!r} is not a Y8MS file (bad magic)", 0)
    (version,) = struct.unpack("<B", cursor.take(1, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported Y8MS version {version}", len(MAGIC))
    num_classes = cursor.uint32("class count")
    width = cursor.uint32("feature width")
    dataset = Dataset(num_classes, width)
    while not cursor.exhausted:
        start = cursor.offset
        try:
            ident = cursor.take(cursor.uint32("id length"), "video id").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("video id is not UTF-8", start) from exc
        count = cursor.uint32("label count")
        labels = np.frombuffer(cursor.take(4 * count, "labels"), dtype="<u4")
        steps = cursor.uint32("frame count")
        if steps < 1:
            raise FormatError(f"video {ident!r} has no frames", cursor.offset - 4)
        frames = np.frombuffer(cursor.take(4 * steps * width, "frames"), dtype="<f4").reshape(steps, width)
        dataset.videos.append(FeatureSequence(TensorBuffer(frames), labels.tolist(), ident))
    return dataset


def write_splits(splits: dict, out_dir, spec: DatasetSpec = None) -> pathlib.Path:
    """Write each split as ``<name>.y8ms`` (and the spec as YAML) into ``out_dir``."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, dataset in splits.items():
        write_dataset(dataset, out_dir / f"{name}{SUFFIX}")
        logger.info("wrote %s", out_dir / f"{name}{SUFFIX}")
    if spec is not None:
        (out_dir / SPEC_FILE).write_text(yaml.safe_dump(spec.to_dict(), sort_keys=True))
    return out_dir


def read_split(data_dir, name: str) -> Dataset:
    """Read split ``name`` from a directory made by :func:`write_splits`."""
    path = pathlib.Path(data_dir) / f"{name}{SUFFIX}"
    if not path.exists():
        raise DataError(f"no {name!r} split in {str(data_dir)!r}")
    return read_dataset(path)


def write_stats_csv(stats: LabelStats, counts, out_dir) -> list:
    """
    Dump label counts and the co-occurrence table as CSV files.

    ``counts`` is the ``C x C`` co-occurrence array.  Returns the paths written.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats_path = out_dir / "label_stats.csv"
    with open(stats_path, "w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["ClassId", "Count"])
        writer.writerows([k, int(n)] for k, n in enumerate(stats.counts))
    pairs_path = out_dir / "cooccurrence.csv"
    with open(pairs_path, "w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["ClassA", "ClassB", "Count"])
        rows, cols = np.nonzero(np.triu(counts))
        writer.writerows([int(i), int(j), int(counts[i, j])] for i, j in zip(rows, cols))
    return [stats_path, pairs_path]
