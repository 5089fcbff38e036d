"""
Global average precision over pooled top-K predictions.

.. rubric:: Types
.. autosummary::
    ~PredictionBatch
    ~VideoPrediction

.. rubric:: Functions
.. autosummary::
    ~gap_at_k
    ~read_predictions
    ~top_k
    ~write_predictions

.. rubric:: Exceptions
.. autosummary::
    ~UndefinedMetric
"""

import csv
import dataclasses
import logging
import pathlib

import numpy as np

from .core import ConfigError
from .core import Y8mException
from .data import FormatError
from .numerics import TensorBuffer

logger = logging.getLogger(__name__)

CSV_HEADER = ["VideoId", "LabelConfidencePairs"]
DEFAULT_K = 20


class UndefinedMetric(Y8mException, ValueError):
    """The metric has no value for this input (no ground-truth labels)."""


def _check_k(k):
    if int(k) < 1:
        raise ConfigError(f"K must be >= 1, received {k!r}")
    return int(k)


def top_k(scores, k: int) -> list:
    """
    The ``min(k, C)`` highest scores as ``(class_id, confidence)``.

    Sorted by confidence descending, ties by ascending class id.
    """
    k = _check_k(k)
    values = scores.values if isinstance(scores, TensorBuffer) else np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(values.size), -values))[:k]
    return [(int(c), float(values[c])) for c in order]


@dataclasses.dataclass
class VideoPrediction:
    """Ranked ``(class_id, confidence)`` pairs of one video, with its true labels."""

    video_id: str
    pairs: list
    labels: tuple = ()

    def __post_init__(self):
        self.pairs = [(int(c), float(s)) for c, s in self.pairs]
        classes = [c for c, _ in self.pairs]
        if len(set(classes)) != len(classes):
            raise ConfigError(f"{self.video_id!r}: duplicate class ids in {classes!r}")
        self.labels = tuple(sorted({int(y) for y in self.labels}))


@dataclasses.dataclass
class PredictionBatch:
    """
    Predictions of many videos, in insertion order.

    .. autosummary::
        ~add
        ~by_id
        ~with_labels
    """

    videos: list = dataclasses.field(default_factory=list)

    def __iter__(self):
        return iter(self.videos)

    def __len__(self) -> int:
        return len(self.videos)

    def add(self, video_id, pairs, labels=()) -> VideoPrediction:
        """Append one video's predictions."""
        prediction = VideoPrediction(video_id, pairs, labels)
        self.videos.append(prediction)
        return prediction

    def by_id(self) -> dict:
        """``{video_id: VideoPrediction}``."""
        return {v.video_id: v for v in self.videos}

    def with_labels(self, labels_by_id: dict) -> "PredictionBatch":
        """Copy with ground-truth labels taken from ``labels_by_id``."""
        return PredictionBatch(
            [VideoPrediction(v.video_id, v.pairs, labels_by_id.get(v.video_id, ())) for v in self.videos]
        )


def gap_at_k(batch: PredictionBatch, k: int = DEFAULT_K) -> float:
    """
    Average precision of all videos' top-K pairs pooled into one ranking.

    Pairs are sorted by confidence descending, ties by video insertion order,
    then class id.  The sum of precision at each hit is divided by the total
    number of ground-truth labels, counted in full even when a video has more
    than K of them.
    """
    k = _check_k(k)
    positives = sum(len(v.labels) for v in batch)
    if positives == 0:
        raise UndefinedMetric("GAP is undefined without ground-truth labels")
    confs, hits, order_video, order_class = [], [], [], []
    for index, video in enumerate(batch):
        truth = set(video.labels)
        ranked = sorted(video.pairs, key=lambda pair: (-pair[1], pair[0]))[:k]
        for c, s in ranked:
            confs.append(s)
            hits.append(c in truth)
            order_video.append(index)
            order_class.append(c)
    if not confs:
        return 0.0
    order = np.lexsort((order_class, order_video, -np.asarray(confs)))
    hits = np.asarray(hits, dtype=float)[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision * hits) / positives)


def write_predictions(batch: PredictionBatch, path) -> None:
    """Write ``VideoId,LabelConfidencePairs`` CSV, confidences with 6 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for video in batch:
            writer.writerow([video.video_id, " ".join(f"{c} {s:.6g}" for c, s in video.pairs)])


def read_predictions(path) -> PredictionBatch:
    """Read a prediction CSV (labels are left empty)."""
    path = pathlib.Path(path)
    batch = PredictionBatch()
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise FormatError(f"{str(path)!r}: expected header {CSV_HEADER!r}, found {header!r}")
        for row in reader:
            if len(row) != 2:
                raise FormatError(f"{str(path)!r} line {reader.line_num}: expected 2 fields, found {len(row)}")
            tokens = row[1].split()
            if len(tokens) % 2:
                raise FormatError(f"{str(path)!r} line {reader.line_num}: odd number of pair tokens")
            try:
                pairs = [(int(c), float(s)) for c, s in zip(tokens[::2], tokens[1::2])]
            except ValueError as exc:
                raise FormatError(f"{str(path)!r} line {reader.line_num}: {exc}") from exc
            batch.add(row[0], pairs)
    return batch
