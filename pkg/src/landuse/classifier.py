"""Per-stream linear softmax classifier with step-decay SGD schedules.

The model is a multinomial logistic head over fixed feature vectors, the
desk-scale stand-in for a fine-tuned CNN. Training is plain SGD (momentum
and weight decay default to 0 but are exposed), double precision, and
bit-for-bit reproducible given a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import Batch, stratified_batches

MODEL_MAGIC = b"LUSM1"


class ModelIOError(ValueError):
    pass


@dataclass
class SoftmaxModel:
    W: np.ndarray  # (n, D)
    b: np.ndarray  # (n,)
    stream: str

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def D(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "SoftmaxModel":
        return SoftmaxModel(W=self.W.copy(), b=self.b.copy(), stream=self.stream)


@dataclass(frozen=True)
class Schedule:
    """Step-decay SGD schedule: lr(e) = initial_lr / decay_factor^(e // decay_every)."""

    initial_lr: float = 0.01
    decay_factor: float = 10.0
    decay_every: int = 5
    total_epochs: int = 12
    batch_size: int = 256
    seed: int = 0
    domain_ratio: float = 0.5
    momentum: float = 0.0
    weight_decay: float = 0.0

    def lr_at(self, epoch: int) -> float:
        return self.initial_lr / self.decay_factor ** (epoch // self.decay_every)


@dataclass
class TrainResult:
    model: SoftmaxModel
    val_accuracy: list[float] = field(default_factory=list)


def init_model(n: int, D: int, stream: str) -> SoftmaxModel:
    """Zero-initialized model. The objective is convex, so zero init is
    exact and deterministic; forward on any input gives uniform scores."""
    if n < 2 or D < 1:
        raise ValueError(f"bad model shape n={n}, D={D}")
    return SoftmaxModel(W=np.zeros((n, D)), b=np.zeros(n), stream=stream)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: SoftmaxModel, x) -> np.ndarray:
    """softmax(Wx + b), overflow-safe. Returns a probability vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.D,):
        raise ValueError(f"feature dimension {x.shape} does not match D={model.D}")
    return _softmax_rows(model.W @ x + model.b)


def forward_batch(model: SoftmaxModel, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != model.D:
        raise ValueError(f"feature dimension {X.shape[1]} does not match D={model.D}")
    return _softmax_rows(X @ model.W.T + model.b)


def _batch_arrays(model: SoftmaxModel, batch: Batch):
    X = np.empty((batch.size, model.D))
    y = np.empty(batch.size, dtype=np.intp)
    for i, rec in enumerate(batch.records):
        try:
            X[i] = rec.features[model.stream]
        except KeyError:
            raise ValueError(
                f"record {rec.id}: missing features for stream {model.stream!r}") from None
        if rec.label is None:
            raise ValueError(f"record {rec.id}: unlabeled record in training batch")
        y[i] = rec.label
    return X, y


def loss_grad(model: SoftmaxModel, batch: Batch, sample_weights):
    """Weighted-mean cross-entropy loss and its analytic gradients.

    Weighted mean (not sum) so that gating samples out does not implicitly
    shrink the learning rate; all-zero weights give zero loss and zero
    gradients.
    """
    w = np.asarray(sample_weights, dtype=np.float64)
    if w.shape != (batch.size,):
        raise ValueError(f"need {batch.size} sample weights, got {w.shape}")
    if np.any(w < 0):
        raise ValueError("sample weights must be >= 0")
    wsum = w.sum()
    if wsum == 0.0:
        return 0.0, np.zeros_like(model.W), np.zeros_like(model.b)
    X, y = _batch_arrays(model, batch)
    P = forward_batch(model, X)
    idx = np.arange(batch.size)
    loss = float(-(w * np.log(P[idx, y])).sum() / wsum)
    E = P.copy()
    E[idx, y] -= 1.0
    WE = E * w[:, None]
    gradW = WE.T @ X / wsum
    gradb = WE.sum(axis=0) / wsum
    return loss, gradW, gradb


def train(model: SoftmaxModel, records, schedule: Schedule,
          validation=None) -> TrainResult:
    """SGD over stratified batches with unit sample weights."""
    return _sgd(model, records, schedule, weight_fn=None, validation=validation)


def _sgd(model: SoftmaxModel, records, schedule: Schedule,
         weight_fn=None, validation=None) -> TrainResult:
    """Shared SGD loop. ``weight_fn(model, batch) -> weights`` supplies
    per-sample loss weights from the current model state (used by the
    adaptive gate); None means unit weights."""
    m = model.copy()
    vW = np.zeros_like(m.W)
    vb = np.zeros_like(m.b)
    trace = []
    for epoch in range(schedule.total_epochs):
        lr = schedule.lr_at(epoch)
        batches = stratified_batches(records, schedule.batch_size,
                                     schedule.domain_ratio,
                                     seed=schedule.seed + epoch)
        for batch in batches:
            if weight_fn is None:
                w = np.ones(batch.size)
            else:
                w = weight_fn(m, batch)
            _, gW, gb = loss_grad(m, batch, w)
            if schedule.weight_decay:
                gW = gW + schedule.weight_decay * m.W
                gb = gb + schedule.weight_decay * m.b
            if schedule.momentum:
                vW = schedule.momentum * vW + gW
                vb = schedule.momentum * vb + gb
                gW, gb = vW, vb
            m.W -= lr * gW
            m.b -= lr * gb
        if validation is not None:
            trace.append(accuracy(m, validation))
    return TrainResult(model=m, val_accuracy=trace)


def predict(model: SoftmaxModel, record) -> int:
    return int(np.argmax(forward(model, record.features[model.stream])))


def accuracy(model: SoftmaxModel, records) -> float:
    if not records:
        return 0.0
    correct = sum(1 for r in records if predict(model, r) == r.label)
    return correct / len(records)


# ---------------------------------------------------------------------------
# model files


def save_model(model: SoftmaxModel, path) -> None:
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<II", model.n, model.D))
        raw = model.stream.encode("utf-8")
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(np.ascontiguousarray(model.W, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(model.b, dtype="<f8").tobytes())


def load_model(path) -> SoftmaxModel:
    with open(path, "rb") as f:
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ModelIOError(
                f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        header = f.read(8)
        if len(header) < 8:
            raise ModelIOError(f"{path}: truncated header")
        n, d = struct.unpack("<II", header)
        (slen,) = struct.unpack("<I", f.read(4))
        stream = f.read(slen).decode("utf-8")
        wbuf = f.read(8 * n * d)
        bbuf = f.read(8 * n)
        if len(wbuf) < 8 * n * d or len(bbuf) < 8 * n:
            raise ModelIOError(f"{path}: truncated weights")
        W = np.frombuffer(wbuf, dtype="<f8").reshape(n, d).copy()
        b = np.frombuffer(bbuf, dtype="<f8").copy()
        return SoftmaxModel(W=W, b=b, stream=stream)
