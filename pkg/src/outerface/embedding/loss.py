"""Additive angular margin softmax loss and its analytic gradient.

Logits are ``s * cos(theta_ij + m * [j == y_i])`` where ``theta_ij`` is the
angle between the normalized feature ``f_i`` and the normalized class column
``W_j``. The loss is the batch mean of the softmax cross-entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import LabelOutOfRange, NormalizationDegenerate

COS_CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    scale: float = 64.0
    margin: float = 0.5

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not 0.0 <= self.margin < math.pi / 2:
            raise ValueError("margin must lie in [0, pi/2)")


def _unit(x: np.ndarray, axis: int):
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    if np.any(norm < 1e-12):
        raise NormalizationDegenerate("zero-norm vector in loss input")
    return x / norm, norm


def _check_labels(labels: np.ndarray, n: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise LabelOutOfRange("labels must be a 1-d integer array")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise LabelOutOfRange(f"labels must lie in [0, {n - 1}]")
    return labels


def _forward(features, labels, W, cfg: LossConfig):
    f_hat, f_norm = _unit(np.asarray(features), axis=1)
    w_hat, w_norm = _unit(np.asarray(W), axis=0)
    labels = _check_labels(labels, w_hat.shape[1])
    rows = np.arange(len(labels))
    cos = f_hat @ w_hat
    cos_t = np.clip(cos[rows, labels], -1 + COS_CLAMP, 1 - COS_CLAMP)
    theta = np.arccos(cos_t)
    logits = cfg.scale * cos
    logits[rows, labels] = cfg.scale * np.cos(theta + cfg.margin)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[rows, labels]
    ctx = (f_hat, f_norm, w_hat, w_norm, labels, rows, cos, theta, shifted, log_z)
    return float(losses.mean()), logits, ctx


def arcface_loss(features, labels, W, cfg: LossConfig = LossConfig()):
    """Return ``(loss, logits)`` for raw features ``(B, d)`` and class weights ``(d, n)``."""
    loss, logits, _ = _forward(features, labels, W, cfg)
    return loss, logits


def _backward(ctx, cfg: LossConfig):
    f_hat, f_norm, w_hat, w_norm, labels, rows, cos, theta, shifted, log_z = ctx
    batch = len(labels)
    probs = np.exp(shifted - log_z[:, None])
    d_logits = probs
    d_logits[rows, labels] -= 1.0
    d_logits /= batch
    # d logit / d cos: s everywhere; s * sin(theta+m)/sin(theta) on the target
    d_cos = cfg.scale * d_logits
    cos_target = cos[rows, labels]
    inside = (cos_target > -1 + COS_CLAMP) & (cos_target < 1 - COS_CLAMP)
    ratio = np.where(inside, np.sin(theta + cfg.margin) / np.sin(theta), 0.0)
    d_cos[rows, labels] *= ratio
    g_fhat = d_cos @ w_hat.T
    g_what = f_hat.T @ d_cos
    # Jacobians of x -> x / |x|
    grad_f = (g_fhat - f_hat * np.sum(g_fhat * f_hat, axis=1, keepdims=True)) / f_norm
    grad_w = (g_what - w_hat * np.sum(g_what * w_hat, axis=0, keepdims=True)) / w_norm
    return grad_f, grad_w


def arcface_backward(features, labels, W, cfg: LossConfig = LossConfig()):
    """Gradients of :func:`arcface_loss` w.r.t. the raw features and the raw ``W``."""
    _, _, ctx = _forward(features, labels, W, cfg)
    return _backward(ctx, cfg)


def arcface_loss_and_grad(features, labels, W, cfg: LossConfig = LossConfig()):
    """Single pass returning ``(loss, logits, grad_features, grad_W)``."""
    loss, logits, ctx = _forward(features, labels, W, cfg)
    grad_f, grad_w = _backward(ctx, cfg)
    return loss, logits, grad_f, grad_w
