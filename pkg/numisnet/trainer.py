"""
Training loop, stopping rules, classification metrics and history files
"""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .core.checkpoint import Checkpoint
from .core.network import Network
from .core.optim import AdamState, adam_step
from .core.topology import NetworkTopology, presets
from .dataset import Manifest, Sample, batches
from .errors import ConfigError, DataError, ManifestError, NumericError
from .imaging import load_tensors

logger = logging.getLogger(__name__)

MONITORS = ("train_loss", "val_loss")

PathLike = Union[str, Path]


@dataclass
class TrainConfig:
    batch_size: int = 24
    max_epochs: int = 200
    loss_threshold: float = 0.001
    patience: int = 30
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    topology: str = "paper"
    monitor: str = "train_loss"
    literal_final_relu: bool = False
    literal_output_dropout: bool = False
    shard_size: int = 8

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "patience", "shard_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be positive, got {getattr(self, name)}")
        if self.loss_threshold <= 0:
            raise ConfigError(f"train.loss_threshold must be positive, got {self.loss_threshold}")
        if self.patience > self.max_epochs:
            raise ConfigError(
                f"train.patience ({self.patience}) exceeds train.max_epochs ({self.max_epochs})")
        if self.monitor not in MONITORS:
            raise ConfigError(f"train.monitor must be one of {', '.join(MONITORS)}")
        if presets.get(self.topology) is None:
            raise ConfigError(f"unknown topology preset '{self.topology}' "
                              f"(known: {', '.join(presets.list_presets())})")

    def adam_state(self) -> AdamState:
        return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon)


@dataclass
class Metrics:
    """Confusion counts with the positive class meaning 'contains element'"""
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    accuracy: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    zero_division: bool = False

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "Metrics":
        total = tp + fp + tn + fn
        if total == 0:
            raise DataError("cannot compute metrics without samples")
        zero_division = False
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision, zero_division = 0.0, True
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall, zero_division = 0.0, True
        if zero_division:
            logger.warning("precision or recall undefined (tp=%d fp=%d fn=%d), reported as 0",
                           tp, fp, fn)
        return cls(tp=tp, fp=fp, tn=tn, fn=fn, accuracy=(tp + tn) / total,
                   precision=precision, recall=recall, f1=f1_score(precision, recall),
                   zero_division=zero_division)

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "Metrics":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        return cls.from_counts(
            tp=int(((y_pred == 1) & (y_true == 1)).sum()),
            fp=int(((y_pred == 1) & (y_true == 0)).sum()),
            tn=int(((y_pred == 0) & (y_true == 0)).sum()),
            fn=int(((y_pred == 0) & (y_true == 1)).sum()),
        )


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    val_precision: float
    val_recall: float
    val_f1: float
    seconds: float


@dataclass
class StopDecision:
    stop: bool
    reason: Optional[str] = None


def early_stop_check(history: Sequence[EpochRecord], config: TrainConfig) -> StopDecision:
    """Loss threshold, then patience, then the epoch cap"""
    if not history:
        raise ConfigError("early_stop_check needs at least one epoch record")
    series = [getattr(record, config.monitor) for record in history]
    if series[-1] < config.loss_threshold:
        return StopDecision(True, "loss_threshold")

    best = float("inf")
    streak = 0
    for value in series:
        if value < best:
            best = value
            streak = 0
        else:
            streak += 1
    if streak >= config.patience:
        return StopDecision(True, "patience")
    if history[-1].epoch >= config.max_epochs:
        return StopDecision(True, "max_epochs")
    return StopDecision(False)


@dataclass
class TensorSplit:
    samples: List[Sample]
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def load(cls, samples: Sequence[Sample], manifest: Manifest, layout: str,
             side: int) -> "TensorSplit":
        if not samples:
            raise DataError("split has no samples")
        paths = [manifest.resolve(s.image_path) for s in samples]
        x = load_tensors(paths, layout, side)
        y = np.array([s.target for s in samples], dtype=np.int64)
        return cls(list(samples), x, y)


@dataclass
class TrainingData:
    train: TensorSplit
    val: TensorSplit

    @classmethod
    def from_manifest(cls, manifest: Manifest, layout: str, side: int) -> "TrainingData":
        return cls(
            train=TensorSplit.load(manifest.by_split("train"), manifest, layout, side),
            val=TensorSplit.load(manifest.by_split("val"), manifest, layout, side),
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: List[EpochRecord]
    stop_reason: str
    best_epoch: int
    final_params: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def best_record(self) -> EpochRecord:
        return self.history[self.best_epoch - 1]


def _mean_loss(probs: np.ndarray, y: np.ndarray) -> float:
    picked = np.clip(probs[np.arange(len(y)), y], 1e-12, 1.0)
    return float(-np.log(picked.astype(np.float64)).mean())


def train(config: TrainConfig, data: TrainingData, topology: NetworkTopology,
          jobs: int = 1) -> TrainResult:
    """Mini-batch Adam training; keeps the best-validation-accuracy parameters"""
    network = Network(topology, seed=config.seed)
    state = config.adam_state()
    row_of = {s.id: i for i, s in enumerate(data.train.samples)}
    n_train = len(data.train.samples)
    channel_mean = data.train.x.mean(axis=(0, 1, 2), dtype=np.float64).astype(np.float32)

    history: List[EpochRecord] = []
    best_accuracy = -1.0
    best_epoch = 0
    best_params: Dict[str, np.ndarray] = {}
    decision = StopDecision(False)

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        loss_sum = 0.0
        correct = 0
        for b_index, batch in enumerate(
                batches(data.train.samples, config.batch_size, config.seed, epoch), start=1):
            rows = np.array([row_of[s.id] for s in batch])
            xs, ys = data.train.x[rows], data.train.y[rows]
            seed_seq = np.random.SeedSequence([config.seed, epoch, b_index])
            try:
                loss, grads, preds = network.loss_and_grads(
                    xs, ys, seed_seq, shard_size=config.shard_size, jobs=jobs)
            except NumericError as e:
                raise NumericError("non-finite values during training",
                                   epoch=epoch, batch=b_index, layer=e.layer)
            if not np.isfinite(loss):
                raise NumericError("non-finite loss", epoch=epoch, batch=b_index,
                                   layer=topology.layers[-1].name)
            adam_step(network.params, grads, state)
            loss_sum += loss * len(batch)
            correct += int((preds == ys).sum())

        val_probs = network.predict_proba(data.val.x)
        val_pred = (val_probs[:, 1] > val_probs[:, 0]).astype(np.int64)
        val_metrics = Metrics.from_predictions(data.val.y, val_pred)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n_train,
            train_accuracy=correct / n_train,
            val_loss=_mean_loss(val_probs, data.val.y),
            val_accuracy=val_metrics.accuracy,
            val_precision=val_metrics.precision,
            val_recall=val_metrics.recall,
            val_f1=val_metrics.f1,
            seconds=time.perf_counter() - started,
        )
        history.append(record)
        logger.info("epoch %d: loss %.5f train acc %.3f val acc %.3f (%.1fs)",
                    epoch, record.train_loss, record.train_accuracy,
                    record.val_accuracy, record.seconds)

        if record.val_accuracy > best_accuracy:
            best_accuracy = record.val_accuracy
            best_epoch = epoch
            best_params = {name: p.copy() for name, p in network.params.items()}

        decision = early_stop_check(history, config)
        if decision.stop:
            logger.info("stopping after epoch %d: %s", epoch, decision.reason)
            break

    checkpoint = Checkpoint(topology=topology, params=best_params,
                            extras={"input.channel_mean": channel_mean})
    return TrainResult(checkpoint=checkpoint, history=history,
                       stop_reason=decision.reason or "max_epochs", best_epoch=best_epoch,
                       final_params=network.params)


def evaluate(model: Union[Checkpoint, Network], x: np.ndarray, y: np.ndarray) -> Metrics:
    """Eval-mode predictions against labels; ties count as negative"""
    if len(y) == 0:
        raise DataError("cannot evaluate an empty split")
    network = model.network() if isinstance(model, Checkpoint) else model
    if tuple(x.shape[1:]) != network.topology.input_shape:
        raise ConfigError(
            f"inputs of shape {x.shape[1:]} do not match the model input "
            f"{network.topology.input_shape}")
    return Metrics.from_predictions(y, network.predict(x))


HISTORY_COLUMNS = [f.name for f in fields(EpochRecord)]


def write_history(path: PathLike, history: Sequence[EpochRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for record in history:
            writer.writerow([repr(v) for v in asdict(record).values()])


def read_history(path: PathLike) -> List[EpochRecord]:
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"cannot read history {path}: {e}")
    history = []
    with handle:
        reader = csv.reader(handle, delimiter="\t")
        header = next(reader, None)
        if header != HISTORY_COLUMNS:
            raise ManifestError(f"{path}: unexpected history header", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(HISTORY_COLUMNS):
                raise ManifestError(f"{path}: expected {len(HISTORY_COLUMNS)} fields",
                                    line=lineno)
            try:
                values = [int(row[0])] + [float(v) for v in row[1:]]
            except ValueError as e:
                raise ManifestError(f"{path}: {e}", line=lineno)
            history.append(EpochRecord(*values))
    return history
