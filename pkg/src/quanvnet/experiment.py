"""Training protocol, metrics, aggregation and model files."""

from __future__ import annotations

import csv
import logging
import math
import re
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classifier import AdamState, ClassifierHead, adam_step, cross_entropy, predict
from .data import DEFAULT_DATASET_SEED, DEFAULT_SIZES
from .encoders import Encoder, num_qubits
from .errors import CacheFormatError, ConfigurationError
from .prng import SplitMix64, derive_seed
from .quanvolution import FilterSpec, PatchBatch, VariationalCircuitSpec, generate_random_circuit

log = logging.getLogger(__name__)

# stream keys mixed into the dataset seed
_TRAIN_ORDER_KEY = 1
_WEIGHT_INIT_KEY = 2
_EVAL_CHUNK = 25


@dataclass
class ExperimentConfig:
    encoder: Encoder = Encoder.FRQI
    filter_edge: int = 2
    stride: int = 1
    rotations: int = 4
    seed: int = 0
    trainable: bool = True
    epochs: int = 50
    steps_per_epoch: int = 100
    val_steps: int = 50
    batch_size: int = 2
    lr: float = 0.01
    threshold: int = 0
    sizes: tuple[int, int, int] = DEFAULT_SIZES
    dataset_seed: int = DEFAULT_DATASET_SEED
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        self.encoder = Encoder.parse(self.encoder)
        if self.epochs < 0 or self.steps_per_epoch < 0 or self.val_steps < 0:
            raise ConfigurationError("epochs and step counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")

    @property
    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.filter_edge, self.stride)

    @property
    def num_qubits(self) -> int:
        return num_qubits(self.encoder, self.filter_spec.n)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float = 0.0


@dataclass
class MetricsLog:
    rows: list[EpochMetrics] = field(default_factory=list)
    test_loss: float = math.nan
    test_acc: float = math.nan

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for r in self.rows:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)])
            w.writerow(["test", "", "", repr(self.test_loss), repr(self.test_acc)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsLog":
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                if not row:
                    continue
                if row[0] == "test":
                    out.test_loss, out.test_acc = float(row[3]), float(row[4])
                else:
                    out.rows.append(EpochMetrics(int(row[0]), *(float(x) for x in row[1:5])))
        return out


@dataclass
class Model:
    circuit: VariationalCircuitSpec
    head: ClassifierHead
    encoder: Encoder
    filter_spec: FilterSpec
    patches_per_image: int


def _check_source(cfg: ExperimentConfig, source, name: str) -> None:
    n = cfg.filter_spec.n
    if source.encoder is not cfg.encoder or source.n != n:
        raise CacheFormatError(
            f"{name} data holds {source.encoder.name} n={source.n}, "
            f"config asks for {cfg.encoder.name} n={n}"
        )
    if source.num_qubits != cfg.num_qubits:
        raise CacheFormatError(f"{name} data has {source.num_qubits} qubits, expected {cfg.num_qubits}")


class Trainer:
    """Single-writer training loop over encoded sources.

    Sources expose ``encoder``, ``n``, ``num_qubits``, ``patches_per_image``,
    ``__len__``, ``states(i)`` and ``label(i)`` (see :mod:`quanvnet.data`).
    """

    def __init__(self, cfg: ExperimentConfig, train, val=None, test=None) -> None:
        self.cfg = cfg
        self.train, self.val, self.test = train, val, test
        for name, src in (("train", train), ("val", val), ("test", test)):
            if src is not None:
                _check_source(cfg, src, name)
        ppis = {src.patches_per_image for src in (train, val, test) if src is not None}
        if len(ppis) != 1:
            raise CacheFormatError(f"sources disagree on patches per image: {sorted(ppis)}")
        self.patches_per_image = ppis.pop()
        q = cfg.num_qubits
        self.circuit = generate_random_circuit(cfg.seed, q, cfg.rotations, cfg.trainable)
        self.initial_theta = self.circuit.theta.copy()
        self.theta = self.circuit.theta.copy()
        features = q * self.patches_per_image
        self.head = ClassifierHead.initialize(features, derive_seed(cfg.dataset_seed, _WEIGHT_INIT_KEY))
        self.adam_w = AdamState.zeros_like(self.head.weights, lr=cfg.lr)
        self.adam_theta = AdamState.zeros_like(self.theta, lr=cfg.lr)
        self._order: list[int] = []
        self._order_pos = 0
        self._order_pass = 0
        self._val_pos = 0
        self.steps_done = 0

    # -- model pieces -------------------------------------------------------

    @property
    def model(self) -> Model:
        return Model(
            self.circuit.with_angles(self.theta),
            ClassifierHead(self.head.weights.copy()),
            self.cfg.encoder,
            self.cfg.filter_spec,
            self.patches_per_image,
        )

    def _features(self, source, indices: Sequence[int], with_grad: bool):
        states = [s for i in indices for s in source.states(i)]
        batch = PatchBatch(states, self.circuit)
        if with_grad:
            ev, dev = batch.shift_derivatives(self.theta)
        else:
            ev, dev = batch.expectations(self.theta), None
        b, n, q = len(indices), self.patches_per_image, self.circuit.num_qubits
        x = ev.reshape(b, n, q).transpose(0, 2, 1).reshape(b, q * n)
        return x, dev

    # -- steps ----------------------------------------------------------------

    def next_train_batch(self) -> list[int]:
        out = []
        while len(out) < self.cfg.batch_size:
            if self._order_pos >= len(self._order):
                self._order = list(range(len(self.train)))
                SplitMix64(
                    derive_seed(self.cfg.dataset_seed, _TRAIN_ORDER_KEY, self._order_pass)
                ).shuffle(self._order)
                self._order_pass += 1
                self._order_pos = 0
            out.append(self._order[self._order_pos])
            self._order_pos += 1
        return out

    def loss_and_grads(self, indices: Sequence[int]):
        """``(loss, correct, grad_weights, grad_theta)`` for one mini-batch.

        ``grad_theta`` is None when the circuit is frozen.
        """
        trainable = self.circuit.trainable and self.theta.size > 0
        x, dev = self._features(self.train, indices, trainable)
        labels = np.array([self.train.label(i) for i in indices])
        logits = x @ self.head.weights.T
        loss, dlogits = cross_entropy(logits, labels)
        correct = int(np.sum(predict(logits) == labels))
        grad_w = dlogits.T @ x
        grad_theta = None
        if trainable:
            b, n, q = len(indices), self.patches_per_image, self.circuit.num_qubits
            upstream = (dlogits @ self.head.weights).reshape(b, q, n).transpose(0, 2, 1).reshape(b * n, q)
            grad_theta = np.einsum("jpq,pq->j", dev, upstream)
        return loss, correct, grad_w, grad_theta

    def train_step(self, indices: Sequence[int]) -> tuple[float, int]:
        """One optimizer step; returns ``(loss, correct predictions)``."""
        loss, correct, grad_w, grad_theta = self.loss_and_grads(indices)
        if grad_theta is not None:
            self.theta, self.adam_theta = adam_step(self.theta, grad_theta, self.adam_theta)
        weights, self.adam_w = adam_step(self.head.weights, grad_w, self.adam_w)
        self.head = ClassifierHead(weights)
        self.steps_done += 1
        return loss, correct

    def evaluate(self, source, indices: Sequence[int]) -> tuple[float, float]:
        """Mean loss and accuracy over ``indices``."""
        if not len(indices):
            return math.nan, math.nan
        total_loss, correct = 0.0, 0
        for start in range(0, len(indices), _EVAL_CHUNK):
            chunk = list(indices[start : start + _EVAL_CHUNK])
            x, _ = self._features(source, chunk, False)
            labels = np.array([source.label(i) for i in chunk])
            logits = x @ self.head.weights.T
            loss, _ = cross_entropy(logits, labels)
            total_loss += loss * len(chunk)
            correct += int(np.sum(predict(logits) == labels))
        return total_loss / len(indices), correct / len(indices)

    def next_val_indices(self) -> list[int]:
        count = self.cfg.val_steps * self.cfg.batch_size
        if self.val is None or not len(self.val) or not count:
            return []
        out = [(self._val_pos + k) % len(self.val) for k in range(count)]
        self._val_pos = (self._val_pos + count) % len(self.val)
        return out

    def run_epoch(self, epoch: int) -> EpochMetrics:
        start = time.perf_counter()
        losses, correct, seen = [], 0, 0
        for _ in range(self.cfg.steps_per_epoch):
            idx = self.next_train_batch()
            loss, c = self.train_step(idx)
            losses.append(loss)
            correct += c
            seen += len(idx)
        val_loss, val_acc = self.evaluate(self.val, self.next_val_indices()) if self.val is not None else (math.nan, math.nan)
        return EpochMetrics(
            epoch,
            float(np.mean(losses)) if losses else math.nan,
            correct / seen if seen else math.nan,
            val_loss,
            val_acc,
            time.perf_counter() - start,
        )

    def run(self) -> MetricsLog:
        out = MetricsLog()
        for epoch in range(1, self.cfg.epochs + 1):
            row = self.run_epoch(epoch)
            out.rows.append(row)
            log.info(
                "epoch %d train_loss=%.4f train_acc=%.3f val_loss=%.4f val_acc=%.3f (%.1fs)",
                epoch, row.train_loss, row.train_acc, row.val_loss, row.val_acc, row.seconds,
            )
        if self.test is not None:
            out.test_loss, out.test_acc = self.evaluate(self.test, range(len(self.test)))
            log.info("test loss=%.4f acc=%.3f", out.test_loss, out.test_acc)
        return out


def run_experiment(cfg: ExperimentConfig, train, val=None, test=None) -> MetricsLog:
    return Trainer(cfg, train, val, test).run()


# -- aggregation ---------------------------------------------------------------


@dataclass
class Summary:
    runs: int
    train_mean: float
    train_max: float
    val_mean: float
    val_max: float
    test_mean: float
    test_max: float


def aggregate(logs: Sequence[MetricsLog], last_k_epochs: int) -> Summary:
    """Mean over runs of each run's mean over its last ``k`` epochs.

    Maxima are single values: the best epoch of any run for train/val, the
    best final test accuracy for test.
    """
    if not logs:
        raise ConfigurationError("aggregate needs at least one log")
    if last_k_epochs < 1:
        raise ConfigurationError("last_k_epochs must be >= 1")

    def tail_mean(log_: MetricsLog, attr: str) -> float:
        rows = log_.rows[-last_k_epochs:]
        return float(np.mean([getattr(r, attr) for r in rows])) if rows else math.nan

    def all_max(attr: str) -> float:
        vals = [getattr(r, attr) for lg in logs for r in lg.rows]
        return float(max(vals)) if vals else math.nan

    tests = [lg.test_acc for lg in logs]
    return Summary(
        len(logs),
        float(np.mean([tail_mean(lg, "train_acc") for lg in logs])),
        all_max("train_acc"),
        float(np.mean([tail_mean(lg, "val_acc") for lg in logs])),
        all_max("val_acc"),
        float(np.mean(tests)),
        float(max(tests)),
    )


_SEED_PATTERN = re.compile(r"[_\-.]?seed[_\-]?\d+", re.IGNORECASE)


def group_name(path: str | Path) -> str:
    """Metrics file name with its seed tag removed, e.g. ``frqi_f2_trainable``."""
    return _SEED_PATTERN.sub("", Path(path).stem)


def report_rows(paths: Iterable[str | Path], last_k_epochs: int) -> list[dict]:
    groups: dict[str, list[MetricsLog]] = {}
    for p in sorted(paths, key=str):
        groups.setdefault(group_name(p), []).append(MetricsLog.from_csv(p))
    rows = []
    for name, logs in sorted(groups.items()):
        s = aggregate(logs, last_k_epochs)
        rows.append({"group": name, **s.__dict__})
    return rows


# -- model files -----------------------------------------------------------------

MODEL_MAGIC = b"QMDL"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sBBBBBBHHQI")


def save_model(path: str | Path, model: Model) -> None:
    """Header followed by f64 LE angles, then f64 LE head weights."""
    c = model.circuit
    w = np.ascontiguousarray(model.head.weights, dtype="<f8")
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, int(model.encoder), model.filter_spec.n,
        c.num_qubits, model.filter_spec.stride, int(c.trainable),
        model.patches_per_image, c.num_rotations, c.seed, w.shape[0],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(c.theta, dtype="<f8").tobytes())
        fh.write(w.tobytes())


def load_model(path: str | Path) -> Model:
    data = Path(path).read_bytes()
    if len(data) < _MODEL_HEADER.size:
        raise CacheFormatError(f"{path}: truncated model header")
    magic, version, enc_id, n, q, stride, trainable, ppi, rotations, seed, classes = (
        _MODEL_HEADER.unpack_from(data, 0)
    )
    if magic != MODEL_MAGIC or version != MODEL_VERSION:
        raise CacheFormatError(f"{path}: not a model file")
    encoder = Encoder(enc_id)
    if q != num_qubits(encoder, n):
        raise CacheFormatError(f"{path}: qubit count disagrees with encoder")
    nfeat = q * ppi
    expected = _MODEL_HEADER.size + 8 * (rotations + classes * nfeat)
    if len(data) != expected:
        raise CacheFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _MODEL_HEADER.size
    theta = np.frombuffer(data, dtype="<f8", count=rotations, offset=off)
    weights = np.frombuffer(data, dtype="<f8", count=classes * nfeat, offset=off + 8 * rotations)
    circuit = generate_random_circuit(seed, q, rotations, bool(trainable)).with_angles(theta)
    return Model(
        circuit,
        ClassifierHead(weights.reshape(classes, nfeat).astype(np.float64)),
        encoder,
        FilterSpec(1 << n, stride),
        ppi,
    )


def evaluate_model(model: Model, source) -> tuple[float, float]:
    """Loss and accuracy of a saved model on every image of ``source``."""
    cfg = ExperimentConfig(
        encoder=model.encoder,
        filter_edge=model.filter_spec.filter_edge,
        stride=model.filter_spec.stride,
        rotations=model.circuit.num_rotations,
        seed=model.circuit.seed,
        trainable=model.circuit.trainable,
        epochs=0,
    )
    if source.patches_per_image != model.patches_per_image:
        raise CacheFormatError(
            f"model expects {model.patches_per_image} patches per image, "
            f"data has {source.patches_per_image}"
        )
    trainer = Trainer(cfg, source)
    trainer.theta = model.circuit.theta.copy()
    trainer.head = ClassifierHead(model.head.weights.copy())
    return trainer.evaluate(source, range(len(source)))
