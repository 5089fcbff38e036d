"""
Training, evaluation, ensembles, component sweeps, and gradient checks.

.. rubric:: Optimizer
.. autosummary::
    ~AdamState
    ~adam_step
    ~lr_schedule
    ~optimizer_step

.. rubric:: Training & evaluation
.. autosummary::
    ~EvaluationResult
    ~TrainResult
    ~evaluate
    ~evaluate_scorer
    ~load_checkpoint
    ~mean_center_distance
    ~save_checkpoint
    ~train
    ~train_step

.. rubric:: Ensembles
.. autosummary::
    ~ensemble_average
    ~ensemble_diversity
    ~ensemble_files

.. rubric:: Sweeps & checks
.. autosummary::
    ~GradcheckReport
    ~SweepReport
    ~fold_best
    ~gradcheck
    ~greedy_sweep

.. rubric:: Exceptions
.. autosummary::
    ~EnsembleInputError
    ~TrainingDiverged
"""

import dataclasses
import itertools
import json
import logging
import pathlib
import struct
import time

import numpy as np
import pyRestTable
import yaml

from .config import ModelConfig
from .config import apply_overrides
from .config import config_hash
from .core import ConfigError
from .core import DimensionError
from .core import Y8mException
from .core import shape_text
from .core import table_list
from .data import Dataset
from .data import FormatError
from .data import LabelStats
from .data import label_stats
from .labelgraph import CorrelationMatrix
from .labelgraph import build_cooccurrence
from .labelgraph import build_correlation
from .metrics import DEFAULT_K
from .metrics import PredictionBatch
from .metrics import gap_at_k
from .metrics import read_predictions
from .metrics import top_k
from .metrics import write_predictions
from .model import Pipeline
from .numerics import Mode
from .numerics import RngStream
from .numerics import Tape
from .numerics import TensorBuffer
from .numerics import finite_diff_grad
from .pooling import FeatureSequence

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"Y8CK"
CHECKPOINT_VERSION = 1
GRADCHECK_DIMS = {
    "dims.feature_dim": 6,
    "dims.cell_size": 5,
    "dims.num_classes": 4,
    "dims.num_experts": 2,
    "dims.hidden": 4,
    "dims.cnn_channels": 3,
}
GRADCHECK_FRAMES = 6
GRADCHECK_TOLERANCE = 1e-4


class TrainingDiverged(Y8mException, FloatingPointError):
    """The loss or a gradient is not finite."""


class EnsembleInputError(Y8mException, ValueError):
    """Ensemble members do not describe the same videos."""


@dataclasses.dataclass
class AdamState:
    """
    Moments of every parameter, the step counter, and the schedule.

    ``step`` counts completed optimizer steps.
    """

    m: dict = dataclasses.field(default_factory=dict)
    v: dict = dataclasses.field(default_factory=dict)
    step: int = 0
    base_lr: float = 0.0006
    decay_rate: float = 0.95
    decay_interval: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def create(cls, params: dict, training=None) -> "AdamState":
        """Zero moments for ``params``, hyperparameters from a TrainingConfig."""
        state = cls(
            m={name: np.zeros_like(t.values) for name, t in params.items()},
            v={name: np.zeros_like(t.values) for name, t in params.items()},
        )
        if training is not None:
            state.base_lr = training.learning_rate
            state.decay_rate = training.decay_rate
            state.decay_interval = training.decay_interval
            state.beta1 = training.beta1
            state.beta2 = training.beta2
            state.epsilon = training.epsilon
        return state

    def hyperparameters(self) -> dict:
        """Everything but the moments."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("m", "v")}


def lr_schedule(step: int, state: AdamState) -> float:
    """``base_lr * decay_rate ** (step // decay_interval)``."""
    return state.base_lr * state.decay_rate ** (int(step) // state.decay_interval)


def adam_step(param: TensorBuffer, grad, state: AdamState, name: str = None, lr: float = None) -> TensorBuffer:
    """
    One Adam update of ``param`` in place.

    ``state.step`` is the number of the step being taken (1 for the first);
    :func:`optimizer_step` advances it.  ``grad=None`` counts as zero.
    ``lr`` defaults to the scheduled rate.
    """
    name = name or param.name or "param"
    grad = np.zeros_like(param.values) if grad is None else np.asarray(grad, dtype=float)
    if grad.shape != param.shape:
        raise DimensionError(f"{name}: gradient {shape_text(grad.shape)} for parameter {shape_text(param.shape)}")
    t = max(state.step, 1)
    lr = lr_schedule(t - 1, state) if lr is None else lr
    m = state.m.setdefault(name, np.zeros_like(param.values))
    v = state.v.setdefault(name, np.zeros_like(param.values))
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    param.values -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return param


def optimizer_step(params: dict, state: AdamState) -> float:
    """Advance the step counter and update every parameter; returns the rate used."""
    lr = lr_schedule(state.step, state)
    state.step += 1
    for name, param in params.items():
        adam_step(param, param.grad, state, name, lr)
    return lr


def _check_finite(loss: float, params: dict, step: int):
    bad = [name for name, p in params.items() if p.grad is not None and not np.all(np.isfinite(p.grad))]
    if np.isfinite(loss) and not bad:
        return
    magnitudes = {
        name: float(np.nanmax(np.abs(np.where(np.isfinite(p.values), p.values, np.nan)), initial=0.0))
        for name, p in params.items()
    }
    layer = bad[0] if bad else max(magnitudes, key=magnitudes.get)
    raise TrainingDiverged(
        f"non-finite training at step {step}: loss={loss!r}, layer={layer!r},"
        f" max |value|={magnitudes.get(layer, float('nan')):.6g}"
    )


def train_step(model: Pipeline, adam: AdamState, batch: list, rng: RngStream) -> float:
    """
    Forward, backward, and one optimizer step on ``batch``.

    Each video runs its own forward pass; gradients of the batch-mean loss
    accumulate in video order.  Returns the batch-mean loss.
    """
    params = model.parameters()
    for p in params.values():
        p.zero_grad()
    total = 0.0
    seed = 1.0 / len(batch)
    for index, seq in enumerate(batch):
        with Tape() as tape:
            loss = model.loss(seq, Mode.TRAIN, rng.derive(f"video/{index}"))
        total += loss.item()
        tape.backward(loss, seed=np.full(loss.shape, seed))
    mean_loss = total / len(batch)
    _check_finite(mean_loss, params, adam.step)
    optimizer_step(params, adam)
    return mean_loss


@dataclasses.dataclass
class EvaluationResult:
    """GAP and the predictions it was computed from."""

    gap: float
    predictions: PredictionBatch


@dataclasses.dataclass
class TrainResult:
    """Trained model, optimizer state, and the metrics records."""

    model: Pipeline
    adam: AdamState
    history: list
    stats: LabelStats = None


def evaluate_scorer(scorer, dataset, k: int = DEFAULT_K) -> EvaluationResult:
    """GAP@k of ``scorer(seq) -> probabilities`` over ``dataset``."""
    batch = PredictionBatch()
    for seq in dataset:
        scores = np.clip(np.asarray(scorer(seq), dtype=float), 0.0, 1.0)
        batch.add(seq.video_id, top_k(scores, k), seq.labels)
    return EvaluationResult(gap_at_k(batch, k), batch)


def _check_dataset(cfg: ModelConfig, dataset, what):
    if dataset.num_classes != cfg.dims.num_classes or dataset.feature_dim != cfg.dims.feature_dim:
        raise ConfigError(
            f"{what} has C={dataset.num_classes}, D={dataset.feature_dim};"
            f" configuration has C={cfg.dims.num_classes}, D={cfg.dims.feature_dim}"
        )


def evaluate(checkpoint, dataset, k: int = DEFAULT_K, csv_path=None) -> EvaluationResult:
    """
    Evaluation-mode GAP@k of a model (or checkpoint file) on ``dataset``.

    Writes the prediction CSV when ``csv_path`` is given.
    """
    model = checkpoint if isinstance(checkpoint, Pipeline) else load_checkpoint(checkpoint)[0]
    _check_dataset(model.cfg, dataset, "evaluation data")
    result = evaluate_scorer(model.predict, dataset, k)
    if csv_path is not None:
        write_predictions(result.predictions, csv_path)
        logger.info("wrote predictions to %s", csv_path)
    return result


def mean_center_distance(model: Pipeline, videos) -> float:
    """Mean squared distance between each video's embedding and its labels' centers."""
    if model.centers is None:
        raise ConfigError("the model has no class centers (loss.kind is not 'ce_center')")
    distances = []
    centers = model.centers.centers.values
    for seq in videos:
        _, embedding = model.forward(seq, Mode.EVAL)
        for y in seq.labels:
            distances.append(float(np.sum((embedding.values - centers[y]) ** 2)))
    return float(np.mean(distances)) if distances else 0.0


def train(
    cfg: ModelConfig, train_set: Dataset, validation_set: Dataset = None, out=None, metrics_log=None
) -> TrainResult:
    """
    Train the configured pipeline.

    PARAMETERS

    cfg : ModelConfig
        Pipeline and training settings.
    train_set, validation_set : Dataset
        With ``training.merge_validation`` the validation videos are trained
        on as well (GAP is still reported on them).
    out : path
        Checkpoint written at the end, optional.
    metrics_log : path
        JSON-lines file of ``step, lr, train_loss, val_gap`` records, optional.
    """
    cfg.validate()
    _check_dataset(cfg, train_set, "training data")
    if validation_set is not None:
        _check_dataset(cfg, validation_set, "validation data")
    t = cfg.training
    videos = list(train_set)
    if t.merge_validation and validation_set is not None:
        videos += list(validation_set)
    combined = Dataset(train_set.num_classes, train_set.feature_dim, videos)
    if not videos:
        raise ConfigError("no training videos")

    stats = label_stats(combined)
    correlation = None
    if cfg.labelgraph.enabled:
        correlation = build_correlation(
            build_cooccurrence(combined), cfg.labelgraph.normalization, cfg.labelgraph.threshold
        )
    root = RngStream(cfg.seed)
    model = Pipeline.build(cfg, stats, correlation, root)
    adam = AdamState.create(model.parameters(), t)
    history = []
    log_fp = open(metrics_log, "w") if metrics_log is not None else None

    def record(losses):
        val_gap = None
        if validation_set is not None and len(validation_set):
            val_gap = evaluate(model, validation_set, t.eval_k).gap
        entry = {
            "step": adam.step,
            "lr": lr_schedule(adam.step, adam),
            "train_loss": float(np.mean(losses)) if losses else None,
            "val_gap": val_gap,
        }
        history.append(entry)
        logger.info("step %d: lr=%.4g train_loss=%s val_gap=%s", *entry.values())
        if log_fp is not None:
            log_fp.write(json.dumps(entry) + "\n")

    try:
        losses = []
        done = False
        for epoch in range(t.epochs):
            order = root.derive(f"shuffle/{epoch}").permutation(len(videos))
            for start in range(0, len(videos), t.batch_size):
                batch = [videos[i] for i in order[start : start + t.batch_size]]
                losses.append(train_step(model, adam, batch, root.derive(f"step/{adam.step}")))
                if adam.step % t.eval_interval == 0:
                    record(losses)
                    losses = []
                if t.max_steps and adam.step >= t.max_steps:
                    done = True
                    break
            if done:
                break
        if not history or history[-1]["step"] != adam.step:
            record(losses)
    finally:
        if log_fp is not None:
            log_fp.close()

    if out is not None:
        save_checkpoint(out, model, adam)
    return TrainResult(model, adam, history, stats)


def save_checkpoint(path, model: Pipeline, adam: AdamState) -> None:
    """
    Write parameters, buffers, and optimizer state in the Y8CK layout.

    Magic, version byte, uint32 LE header length, YAML header, then every
    tensor of the header's table as float64 LE.
    """
    params, buffers = model.parameters(), model.buffers()
    entries = [(name, "param", t.values) for name, t in params.items()]
    entries += [(name, "buffer", t.values) for name, t in buffers.items()]
    entries += [(name, "adam_m", adam.m[name]) for name in params]
    entries += [(name, "adam_v", adam.v[name]) for name in params]
    header = {
        "config": model.cfg.to_dict(),
        "config_hash": config_hash(model.cfg),
        "adam": adam.hyperparameters(),
        "label_counts": None if model.stats is None else [int(n) for n in model.stats.counts],
        "tensors": [{"name": name, "kind": kind, "shape": list(values.shape)} for name, kind, values in entries],
    }
    text = yaml.safe_dump(header, sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<BI", CHECKPOINT_VERSION, len(text)), text]
    chunks += [np.asarray(values, dtype="<f8").tobytes() for _, _, values in entries]
    pathlib.Path(path).write_bytes(b"".join(chunks))
    logger.info("wrote checkpoint %s", path)


def load_checkpoint(path):
    """Read a Y8CK file; returns ``(Pipeline, AdamState)``."""
    data = pathlib.Path(path).read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + 5
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(f"{str(path)!r} is not a Y8CK checkpoint (bad magic)", 0)
    if len(data) < prefix:
        raise FormatError("truncated checkpoint header", len(data))
    version, length = struct.unpack_from("<BI", data, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", len(CHECKPOINT_MAGIC))
    if len(data) < prefix + length:
        raise FormatError("truncated checkpoint header", len(data))
    try:
        header = yaml.safe_load(data[prefix : prefix + length].decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
    except (yaml.YAMLError, UnicodeDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}", prefix) from exc
    if config_hash(cfg) != header.get("config_hash"):
        raise FormatError("checkpoint configuration does not match its hash", prefix)

    counts = header.get("label_counts")
    stats = None if counts is None else LabelStats(np.asarray(counts, dtype=np.int64))
    placeholder = None
    if cfg.labelgraph.enabled:
        placeholder = CorrelationMatrix.from_array(np.zeros((cfg.dims.num_classes, cfg.dims.num_classes)))
    model = Pipeline.build(cfg, stats, placeholder)
    adam = AdamState(**header["adam"])

    offset = prefix + length
    state = {}
    moments = {"adam_m": adam.m, "adam_v": adam.v}
    for entry in header["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64)) * 8
        if offset + size > len(data):
            raise FormatError(f"truncated tensor {entry['name']!r}", offset)
        values = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).reshape(entry["shape"])
        offset += size
        if entry["kind"] in ("param", "buffer"):
            state[entry["name"]] = values
        elif entry["kind"] in moments:
            moments[entry["kind"]][entry["name"]] = values.astype(float)
        else:
            raise FormatError(f"unknown tensor kind {entry['kind']!r}", offset - size)
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} unexpected trailing bytes", offset)
    model.load_state(state)
    return model, adam


def _video_sets(batches):
    reference = [v.video_id for v in batches[0]]
    for index, batch in enumerate(batches[1:], start=1):
        ids = {v.video_id for v in batch}
        missing = sorted(set(reference) - ids)
        extra = sorted(ids - set(reference))
        if missing or extra:
            raise EnsembleInputError(
                f"member {index} differs from member 0: missing={missing[:10]!r} extra={extra[:10]!r}"
            )
    return reference


def ensemble_average(batches: list, weights=None, k: int = DEFAULT_K) -> PredictionBatch:
    """
    Weighted mean of every class confidence across ``batches``, re-ranked per video.

    A class absent from a member's list contributes zero.  Weights are
    normalized to sum to one (uniform by default).  Ties rank by position in
    the first member's list, then class id.
    """
    if not batches:
        raise EnsembleInputError("no ensemble members")
    if weights is None:
        weights = [1.0] * len(batches)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(batches),) or np.any(weights < 0) or weights.sum() <= 0:
        raise EnsembleInputError(f"need {len(batches)} non-negative weights, received {weights.tolist()!r}")
    weights = weights / weights.sum()

    order = _video_sets(batches)
    lookups = [batch.by_id() for batch in batches]
    merged = PredictionBatch()
    for video_id in order:
        first = lookups[0][video_id]
        scores = {}
        for weight, lookup in zip(weights, lookups):
            for c, s in lookup[video_id].pairs:
                scores[c] = scores.get(c, 0.0) + weight * s
        position = {c: i for i, (c, _) in enumerate(first.pairs)}
        ranked = sorted(scores, key=lambda c: (-scores[c], position.get(c, len(position)), c))[:k]
        merged.add(video_id, [(c, scores[c]) for c in ranked], first.labels)
    return merged


def ensemble_files(paths: list, out, weights=None, k: int = DEFAULT_K) -> PredictionBatch:
    """Average prediction CSV files into ``out``."""
    merged = ensemble_average([read_predictions(p) for p in paths], weights, k)
    write_predictions(merged, out)
    logger.info("wrote ensemble of %d members to %s", len(paths), out)
    return merged


def ensemble_diversity(batches: list, k: int = DEFAULT_K) -> pyRestTable.Table:
    """Mean Jaccard overlap of the top-k class sets for each pair of members."""
    order = _video_sets(batches)
    lookups = [batch.by_id() for batch in batches]
    rows = []
    for i, j in itertools.combinations(range(len(batches)), 2):
        overlaps = []
        for video_id in order:
            a = {c for c, _ in sorted(lookups[i][video_id].pairs, key=lambda p: (-p[1], p[0]))[:k]}
            b = {c for c, _ in sorted(lookups[j][video_id].pairs, key=lambda p: (-p[1], p[0]))[:k]}
            overlaps.append(len(a & b) / len(a | b) if a | b else 1.0)
        rows.append({"a": i, "b": j, "jaccard": f"{np.mean(overlaps) if overlaps else 1.0:.4f}"})
    if not rows:
        table = pyRestTable.Table()
        table.labels = ["a", "b", "jaccard"]
        return table
    return table_list(rows, labels=["a", "b", "jaccard"])


@dataclasses.dataclass
class SweepReport:
    """
    Candidates ranked by GAP; failed runs last.

    .. autosummary::
        ~best
        ~table
    """

    component: str
    rows: list

    def best(self) -> dict:
        """The winning row (``None`` when every run failed)."""
        done = [row for row in self.rows if row["status"] == "ok"]
        return done[0] if done else None

    def table(self) -> pyRestTable.Table:
        """Method / GAP table, one row per candidate."""
        table = pyRestTable.Table()
        table.labels = ["rank", "method", "GAP@K", "status", "seconds", "seed"]
        for row in self.rows:
            gap = "" if row["gap"] is None else f"{row['gap']:.4f}"
            table.addRow((row["rank"], row["name"], gap, row["status"], f"{row['seconds']:.1f}", row["seed"]))
        return table

    def to_dict(self) -> dict:
        """Plain mapping for YAML output."""
        return {"component": self.component, "rows": self.rows}


def greedy_sweep(
    base: ModelConfig, component: str, candidates: list, train_set, validation_set, k: int = DEFAULT_K
):
    """
    Train and evaluate one model per candidate, all other components fixed at ``base``.

    ``candidates`` is a list of ``(name, overrides)``.  A failing candidate is
    reported with status ``failed`` and does not stop the others.
    """
    rows = []
    for index, (name, overrides) in enumerate(candidates):
        logger.info("sweep %s: candidate %d/%d %r", component, index + 1, len(candidates), name)
        row = {"index": index, "name": name, "overrides": dict(overrides), "seed": base.seed, "gap": None}
        start = time.perf_counter()
        try:
            cfg = apply_overrides(base, overrides).validate()
            result = train(cfg, train_set, validation_set)
            row["gap"] = evaluate(result.model, validation_set, k).gap
            row["status"] = "ok"
        except Exception as reason:
            logger.warning("sweep candidate %r failed: %s", name, reason)
            row["status"] = "failed"
            row["error"] = f"{type(reason).__name__}: {reason}"
        row["seconds"] = time.perf_counter() - start
        rows.append(row)
    rows.sort(key=lambda row: (row["status"] != "ok", -(row["gap"] or 0.0), row["index"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return SweepReport(component, rows)


def fold_best(base: ModelConfig, report: SweepReport) -> ModelConfig:
    """``base`` with the winning candidate's overrides applied."""
    best = report.best()
    if best is None:
        raise ConfigError(f"no successful candidate in the {report.component!r} sweep")
    return apply_overrides(base, best["overrides"])


@dataclasses.dataclass
class GradcheckReport:
    """
    Largest relative gradient error per parameter group.

    .. autosummary::
        ~passed
        ~table
    """

    rows: list
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        """True when every group is within tolerance."""
        return all(row["passed"] for row in self.rows)

    def table(self) -> pyRestTable.Table:
        """Group, size, error, verdict."""
        table = pyRestTable.Table()
        table.labels = ["group", "size", "rel. error", "passed"]
        for row in self.rows:
            table.addRow((row["group"], row["size"], f"{row['rel_error']:.3e}", row["passed"]))
        return table


def _gradcheck_videos(cfg: ModelConfig, count=2):
    rng = RngStream(cfg.seed, labels=("gradcheck", "data"))
    classes = cfg.dims.num_classes
    videos = []
    for index in range(count):
        frames = TensorBuffer(rng.normal((GRADCHECK_FRAMES, cfg.dims.feature_dim)), requires_grad=True)
        labels = {index % classes, (2 * index + 1) % classes}
        videos.append(FeatureSequence(frames, sorted(labels), f"g{index}"))
    return videos


def gradcheck(cfg: ModelConfig, dims: dict = None, h: float = 1e-5, tolerance: float = GRADCHECK_TOLERANCE):
    """
    Compare analytic and central-difference gradients of the full pipeline.

    Training mode is used with a random stream recreated for every
    evaluation, so dropout masks and noise stay fixed.  The frame inputs form
    one more group, which is all that parameter-free encoders have.  Relative
    error is ``|a - n| / max(|a| + |n|, 1e-12)`` in the 2-norm.
    """
    cfg = apply_overrides(cfg, GRADCHECK_DIMS if dims is None else dims).validate()
    videos = _gradcheck_videos(cfg)
    dataset = Dataset(cfg.dims.num_classes, cfg.dims.feature_dim, videos)
    correlation = None
    if cfg.labelgraph.enabled:
        correlation = build_correlation(build_cooccurrence(dataset), cfg.labelgraph.normalization)
    model = Pipeline.build(cfg, label_stats(dataset), correlation)

    def total_loss():
        rng = RngStream(cfg.seed, labels=("gradcheck", "forward"))
        return sum(model.loss(seq, Mode.TRAIN, rng.derive(f"video/{i}")).item() for i, seq in enumerate(videos))

    groups = dict(model.parameters())
    for index, seq in enumerate(videos):
        groups[f"input/{index}"] = seq.frames
    for tensor in groups.values():
        tensor.zero_grad()
    rng = RngStream(cfg.seed, labels=("gradcheck", "forward"))
    for index, seq in enumerate(videos):
        with Tape() as tape:
            loss = model.loss(seq, Mode.TRAIN, rng.derive(f"video/{index}"))
        tape.backward(loss)

    rows = []
    for name, tensor in groups.items():
        analytic = np.zeros_like(tensor.values) if tensor.grad is None else tensor.grad.copy()
        numeric = finite_diff_grad(lambda _: total_loss(), tensor, h).values
        scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        error = float(np.linalg.norm(analytic - numeric) / scale)
        rows.append({"group": name, "size": tensor.size, "rel_error": error, "passed": error < tolerance})
        logger.debug("gradcheck %s: rel. error %.3e", name, error)
    return GradcheckReport(rows, tolerance)
