"""Losses, Adam and the full-batch training loop with best-epoch selection."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .evaluation import accuracy, unweighted_f1
from .models import Model, ParamStore, batch_inputs

log = logging.getLogger(__name__)

LOG_EPS = 1e-12
METRICS = ("accuracy", "f1")


def _check_one_hot(labels: np.ndarray, mask: np.ndarray, what: str) -> None:
    rows = labels[mask]
    if rows.size and not (np.all((rows == 0) | (rows == 1)) and np.all(rows.sum(axis=-1) == 1)):
        raise ValueError(f"{what}: masked rows must be one-hot")


@dataclass
class VertexLabelData:
    """Per-step one-hot vertex labels and the labeled-vertex mask.

    labels: (T, V, k); mask: (T, V) boolean, the diagonal of the labeled
    projector at each step.  Rows outside the mask are all zero.
    """

    labels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.labels.ndim != 3 or self.mask.shape != self.labels.shape[:2]:
            raise ValueError(f"labels {self.labels.shape} and mask {self.mask.shape} do not conform")
        _check_one_hot(self.labels, self.mask, "vertex labels")
        if np.any(self.labels[~self.mask] != 0):
            raise ValueError("vertex labels: unlabeled rows must be zero")

    @property
    def num_classes(self) -> int:
        return self.labels.shape[-1]

    def vertex_classes(self) -> tuple[np.ndarray, np.ndarray]:
        """(vertex indices, class) for every vertex labeled at some step.

        The class is the one at the vertex's first labeled step.
        """
        labeled = self.mask.any(axis=0)
        first = np.argmax(self.mask, axis=0)
        idx = np.flatnonzero(labeled)
        cls = np.argmax(self.labels[first[idx], idx], axis=-1)
        return idx, cls

    def restrict(self, vertices) -> "VertexLabelData":
        keep = np.zeros(self.mask.shape[1], dtype=bool)
        keep[np.asarray(vertices, dtype=np.int64)] = True
        mask = self.mask & keep[None, :]
        return VertexLabelData(self.labels * mask[..., None], mask)


@dataclass
class GraphLabelData:
    """Per-step one-hot graph labels (B, T, k) and step mask (B, T)."""

    labels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.labels.ndim != 3 or self.mask.shape != self.labels.shape[:2]:
            raise ValueError(f"labels {self.labels.shape} and mask {self.mask.shape} do not conform")
        _check_one_hot(self.labels, self.mask, "graph labels")

    @property
    def num_classes(self) -> int:
        return self.labels.shape[-1]

    def sequence_classes(self) -> np.ndarray:
        """Majority class over the real steps of each sequence."""
        counts = (self.labels * self.mask[..., None]).sum(axis=1)
        return np.argmax(counts, axis=-1)

    def subset(self, sequences) -> "GraphLabelData":
        idx = np.asarray(sequences, dtype=np.int64)
        return GraphLabelData(self.labels[idx], self.mask[idx])


# -- losses ------------------------------------------------------------------

def _true_class_probs(z, labels, mask):
    z = np.asarray(z, dtype=np.float64)
    if z.shape != labels.shape:
        raise ValueError(f"predictions {z.shape} do not match labels {labels.shape}")
    cls = np.argmax(labels[mask], axis=-1)
    return z[mask], cls


def _cross_entropy(z, labels, mask) -> float:
    rows, cls = _true_class_probs(z, labels, mask)
    picked = rows[np.arange(len(cls)), cls]
    return float(-np.log(np.maximum(picked, LOG_EPS)).sum())


def _cross_entropy_grad(z, labels, mask) -> np.ndarray:
    rows, cls = _true_class_probs(z, labels, mask)
    picked = rows[np.arange(len(cls)), cls]
    g_rows = np.zeros_like(rows)
    # the clamp has zero slope below LOG_EPS
    g_rows[np.arange(len(cls)), cls] = np.where(picked > LOG_EPS, -1.0 / np.maximum(picked, LOG_EPS), 0.0)
    grad = np.zeros(np.shape(z))
    grad[mask] = g_rows
    return grad


def vertex_masked_cross_entropy(z, data: VertexLabelData) -> float:
    """Cross-entropy summed over steps and labeled vertices only.

    ``z`` is (T, V, k) (or (1, T, V, k)); unlabeled rows never enter.
    """
    z = np.asarray(z)
    if z.ndim == 4:
        z = z[0]
    return _cross_entropy(z, data.labels, data.mask)


def vertex_masked_cross_entropy_grad(z, data: VertexLabelData) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim == 4:
        return _cross_entropy_grad(z[0], data.labels, data.mask)[None]
    return _cross_entropy_grad(z, data.labels, data.mask)


def graph_cross_entropy(z, data: GraphLabelData) -> float:
    """Cross-entropy summed over the real steps of every sequence; ``z`` is (B, T, k)."""
    return _cross_entropy(z, data.labels, data.mask)


def graph_cross_entropy_grad(z, data: GraphLabelData) -> np.ndarray:
    return _cross_entropy_grad(z, data.labels, data.mask)


# -- optimiser ---------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 100
    seed: int = 0
    metric: str = "accuracy"

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.lr <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ValueError("invalid Adam hyper-parameters")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")

    def to_dict(self) -> dict:
        return asdict(self)


def adam_step(store: ParamStore, grads: dict, config: TrainConfig, t: int) -> ParamStore:
    """One bias-corrected Adam update of every tensor in ``store`` (in place)."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in store.params.items():
        g = grads[name]
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
    store.step = t
    return store


# -- training loop -----------------------------------------------------------

@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: dict[str, int]
    snapshots: dict[str, dict[str, np.ndarray]]
    final_params: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def selected_epoch(self, metric: str) -> int:
        return self.best_epoch[metric]


class _Task:
    """Inputs and label masks for one train/validation/test partition."""

    def __init__(self, dataset, model: Model):
        self.kind = dataset.task
        self.dataset = dataset
        self.model = model
        if self.kind == "vertex":
            self.a_hat, self.x = batch_inputs(dataset.graphs[0])
        else:
            self.a_hat, self.x = batch_inputs(dataset.graphs)

    def labels_for(self, indices):
        if self.kind == "vertex":
            return self.dataset.labels.restrict(indices)
        return self.dataset.labels.subset(indices)

    def forward(self, indices, mode="eval", rng=None):
        if self.kind == "vertex":
            return self.model.forward(self.a_hat, self.x, mode, rng)[0]
        idx = np.asarray(indices, dtype=np.int64)
        return self.model.forward(self.a_hat[idx], self.x[idx], mode, rng)

    def loss_and_grad(self, z, labels):
        if self.kind == "vertex":
            return vertex_masked_cross_entropy(z, labels), vertex_masked_cross_entropy_grad(z, labels)[None]
        return graph_cross_entropy(z, labels), graph_cross_entropy_grad(z, labels)

    def metrics(self, indices, params=None) -> dict[str, float]:
        if params is not None:
            saved = self.model.store.snapshot()
            self.model.store.load(params)
        try:
            z = self.forward(indices)
        finally:
            if params is not None:
                self.model.store.load(saved)
        labels = self.labels_for(indices)
        k = labels.num_classes
        return {"accuracy": accuracy(z, labels.labels, labels.mask),
                "f1": unweighted_f1(z, labels.labels, labels.mask, k)}


def train(model: Model, dataset, train_idx, val_idx, config: TrainConfig) -> TrainResult:
    """Full-batch Adam training with per-metric best-validation-epoch snapshots.

    ``dataset`` exposes ``task``, ``graphs`` and ``labels``; the index sets
    are vertex indices (vertex task) or sequence indices (graph task).
    """
    task = _Task(dataset, model)
    train_labels = task.labels_for(train_idx)
    if not train_labels.mask.any():
        raise ValueError("empty labeled training set")
    if not task.labels_for(val_idx).mask.any():
        raise ValueError("empty validation set")
    rng = np.random.default_rng([config.seed, 1])
    history = []
    best = {m: -np.inf for m in METRICS}
    best_epoch = {m: 0 for m in METRICS}
    snapshots: dict[str, dict] = {}
    for epoch in range(1, config.max_epochs + 1):
        z = task.forward(train_idx, "train", rng)
        loss, dz = task.loss_and_grad(z, train_labels)
        grads = model.backward(dz)
        adam_step(model.store, grads, config, epoch)
        train_m = task.metrics(train_idx)
        val_m = task.metrics(val_idx)
        row = {"epoch": epoch, "train_loss": loss, "train_accuracy": train_m["accuracy"],
               "val_accuracy": val_m["accuracy"], "val_f1": val_m["f1"]}
        history.append(row)
        for m in METRICS:
            if val_m[m] > best[m]:
                best[m] = val_m[m]
                best_epoch[m] = epoch
                snapshots[m] = model.store.snapshot()
        log.debug("epoch %d loss %.6g val acc %.4f f1 %.4f", epoch, loss, val_m["accuracy"], val_m["f1"])
    return TrainResult(history, best_epoch, snapshots, model.store.snapshot())


def evaluate(model: Model, dataset, indices, params=None) -> dict[str, float]:
    """Accuracy and unweighted F1 of ``model`` on the given samples."""
    return _Task(dataset, model).metrics(indices, params)
