"""Fake-free training of the identity embedding model with SGD + step schedule."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergedTraining, EmptyCorpus, NonFiniteActivation
from .loss import LossConfig, arcface_loss_and_grad
from .network import EmbeddingModel, backward_features, forward_features

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 10
    batch_size: int = 64
    base_lr: float = 0.1
    lr_drop_epochs: tuple[int, ...] = (6, 8)
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    rng_seed: int = 0
    optimizer: str = "sgd"  # "sgd" (momentum) or "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        object.__setattr__(self, "lr_drop_epochs", tuple(int(e) for e in self.lr_drop_epochs))
        drops = self.lr_drop_epochs
        if any(b <= a for a, b in zip(drops, drops[1:])):
            raise ValueError("lr_drop_epochs must be strictly increasing")
        if drops and drops[-1] >= self.epochs:
            raise ValueError("lr_drop_epochs must be < epochs")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index."""
        n_drops = sum(epoch >= e for e in self.lr_drop_epochs)
        return self.base_lr * self.lr_drop_factor ** n_drops


# Full-scale schedule: a MobileNet-class backbone on millions of 112x112 faces.
FULL_SCALE_SCHEDULE = TrainSchedule(epochs=30, batch_size=400, base_lr=0.1, lr_drop_epochs=(12, 15, 18))
FULL_SCALE_EMBED_DIM = 512
FULL_SCALE_LOSS = LossConfig(scale=64.0, margin=0.5)

# Desk-scale preset: the small unnormalized convnet stalls under momentum SGD
# at lr 0.1, so it trains with Adam and a gentler margin.
DESK_SCHEDULE = TrainSchedule(epochs=10, batch_size=64, base_lr=0.003, lr_drop_epochs=(6, 8),
                              weight_decay=0.0, optimizer="adam")
DESK_LOSS = LossConfig(scale=16.0, margin=0.1)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    train_accuracy: float
    lr: float


@dataclass
class TrainResult:
    model: EmbeddingModel
    history: list[EpochRecord] = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss", "train_accuracy", "lr"])
            for rec in self.history:
                writer.writerow([rec.epoch, repr(rec.mean_loss), repr(rec.train_accuracy), repr(rec.lr)])


def _no_decay(name: str) -> bool:
    return name.endswith("bias") or name == "proj.W"


def train(model: EmbeddingModel, images: np.ndarray, labels: np.ndarray, schedule: TrainSchedule,
          loss_cfg: LossConfig = LossConfig(), progress=None) -> TrainResult:
    """Train on preprocessed (aligned, cropped, masked) real faces.

    ``images`` is ``N x S x S x 3`` on the 0-255 scale, ``labels`` holds 0-based
    identity indices. The model is updated in place and also returned.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise EmptyCorpus("no training images")
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    cfg = model.config
    params = model.params
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    second = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2 = schedule.adam_betas
    step = 0
    rng = np.random.default_rng(schedule.rng_seed)
    result = TrainResult(model)
    n = len(images)

    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            try:
                feats, cache = forward_features(params, cfg, images[idx], keep_cache=True)
            except NonFiniteActivation as exc:
                raise DivergedTraining(f"{exc} at epoch {epoch}") from exc
            loss, logits, grad_f, grad_w = arcface_loss_and_grad(
                feats.astype(np.float64), labels[idx], params["proj.W"].astype(np.float64), loss_cfg)
            if not np.isfinite(loss):
                raise DivergedTraining(f"non-finite loss at epoch {epoch}")
            loss_sum += loss * len(idx)
            # accuracy on cosine logits (the margin only shapes training)
            cos_pred = np.argmax((feats / np.linalg.norm(feats, axis=1, keepdims=True)) @ params["proj.W"], axis=1)
            correct += int(np.sum(cos_pred == labels[idx]))
            grads = backward_features(params, cfg, cache, grad_f.astype(cfg.dtype))
            grads["proj.W"] = grad_w.astype(cfg.dtype)
            step += 1
            for name, p in params.items():
                g = grads[name]
                if schedule.weight_decay and not _no_decay(name):
                    g = g + schedule.weight_decay * p
                v = velocity[name]
                if schedule.optimizer == "sgd":
                    v *= schedule.momentum
                    v += g
                    p -= lr * v
                else:
                    s2 = second[name]
                    v += (1 - b1) * (g - v)
                    s2 += (1 - b2) * (g * g - s2)
                    p -= lr * (v / (1 - b1 ** step)) / (np.sqrt(s2 / (1 - b2 ** step)) + 1e-8)
        for name, p in params.items():
            if not np.all(np.isfinite(p)):
                raise DivergedTraining(f"non-finite parameter {name} after epoch {epoch}")
        rec = EpochRecord(epoch + 1, loss_sum / n, correct / n, lr)
        result.history.append(rec)
        log.info("epoch %d loss %.4f acc %.4f lr %g", rec.epoch, rec.mean_loss, rec.train_accuracy, lr)
        if progress is not None:
            progress(rec)
    return result
