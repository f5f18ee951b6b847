"""Online adaptive training: confidence-gated second-stage fine-tuning.

Each sample gets a discard probability from the shape of its current score
vector: p = max(0, 2 - exp(max(y) - mean(y))). Near-uniform (confusing)
scores give p close to 1; confident scores give p = 0. The hard gate keeps
a sample iff p is strictly below the threshold; the soft gate weights its
loss by 1 - p. Gating always uses the continuously updated model, not a
frozen snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import Schedule, SoftmaxModel, TrainResult, _batch_arrays, \
    _sgd, forward_batch

HARD = "hard"
SOFT = "soft"


def default_finetune_schedule() -> Schedule:
    return Schedule(initial_lr=1e-5, decay_factor=10.0, decay_every=1,
                    total_epochs=4)


@dataclass(frozen=True)
class GateConfig:
    mode: str = HARD
    threshold: float = 0.5
    #: weight by p instead of 1 - p in soft mode (comparison flag; p is an
    #: ignore-probability, so the default weights by 1 - p)
    weight_by_p: bool = False
    schedule: Schedule = field(default_factory=default_finetune_schedule)

    def __post_init__(self):
        if self.mode not in (HARD, SOFT):
            raise ValueError(f"unknown gate mode {self.mode!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")


@dataclass(frozen=True)
class GateDecision:
    p: float
    weight: float


def _check_distribution(y: np.ndarray) -> None:
    if y.ndim != 1 or y.size == 0:
        raise ValueError("score vector must be a non-empty 1-d array")
    if np.any(y < 0) or not math.isclose(float(y.sum()), 1.0, abs_tol=1e-6):
        raise ValueError("score vector is not a probability distribution")


def discard_probability(y) -> float:
    """p = max(0, 2 - exp|max(y) - mean(y)|) for a score distribution y.

    Uniform scores give p = 1; p hits 0 once max(y) - 1/n >= ln 2.
    """
    y = np.asarray(y, dtype=np.float64)
    _check_distribution(y)
    return max(0.0, 2.0 - math.exp(abs(float(y.max()) - float(y.mean()))))


def gate(y, cfg: GateConfig) -> GateDecision:
    """Per-sample loss weight from the discard probability."""
    p = discard_probability(y)
    if cfg.mode == HARD:
        weight = 1.0 if p < cfg.threshold else 0.0
    elif cfg.weight_by_p:
        weight = p
    else:
        weight = 1.0 - p
    return GateDecision(p=p, weight=weight)


def _batch_weights(cfg: GateConfig, model: SoftmaxModel, batch) -> np.ndarray:
    X, _ = _batch_arrays(model, batch)
    P = forward_batch(model, X)
    p = np.maximum(0.0, 2.0 - np.exp(P.max(axis=1) - P.mean(axis=1)))
    if cfg.mode == HARD:
        return (p < cfg.threshold).astype(np.float64)
    if cfg.weight_by_p:
        return p
    return 1.0 - p


def adaptive_finetune(model: SoftmaxModel, records, cfg: GateConfig,
                      validation=None) -> TrainResult:
    """Second-stage fine-tuning with per-sample gated loss weights.

    Each batch is forwarded through the current model state before its
    update step; the resulting discard probabilities set the sample weights
    for that step's gradient.
    """
    return _sgd(model, records, cfg.schedule,
                weight_fn=lambda m, batch: _batch_weights(cfg, m, batch),
                validation=validation)
