"""Frame scores, ROC/AUC, thresholded accuracy and pair verification accuracy.

Scores are cosine distances: larger means more likely fake.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import SingleClass, TooFewPairs


@dataclass(frozen=True)
class ScoredFrame:
    frame_id: str
    identity: str
    video_id: str
    is_fake: bool
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"{self.frame_id}: non-finite score")


@dataclass(frozen=True)
class RocReport:
    auc: float
    curve: tuple  # ((fpr, tpr), ...)
    n_real: int
    n_fake: int

    def curve_csv(self) -> str:
        lines = ["fpr,tpr"] + [f"{f!r},{t!r}" for f, t in self.curve]
        return "\n".join(lines) + "\n"


def _split(frames: Sequence[ScoredFrame]):
    labels = np.array([f.is_fake for f in frames], dtype=bool)
    scores = np.array([f.score for f in frames], dtype=np.float64)
    return labels, scores


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their mean rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auc_from_scores(is_fake, scores) -> float:
    """Mann-Whitney AUC: probability a fake outscores a real, ties counting half."""
    is_fake = np.asarray(is_fake, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_fake = int(is_fake.sum())
    n_real = len(is_fake) - n_fake
    if n_fake == 0 or n_real == 0:
        raise SingleClass(f"need both classes, got {n_real} real and {n_fake} fake")
    # twice the rank sum is an integer, which keeps the subtraction exact
    twice_rank_sum = float(np.sum(2.0 * average_ranks(scores)[is_fake]))
    u = (twice_rank_sum - n_fake * (n_fake + 1)) / 2.0
    return u / (n_fake * n_real)


def roc_curve(is_fake, scores) -> tuple:
    """(fpr, tpr) points sweeping the threshold down through each distinct score."""
    is_fake = np.asarray(is_fake, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_fake = int(is_fake.sum())
    n_real = len(is_fake) - n_fake
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], is_fake[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[s[1:] != s[:-1], True]
    pts = [(0.0, 0.0)] + [(float(f / n_real), float(t / n_fake)) for f, t in zip(fp[last], tp[last])]
    return tuple(pts)


def roc_auc(frames: Sequence[ScoredFrame]) -> RocReport:
    labels, scores = _split(frames)
    auc = auc_from_scores(labels, scores)
    return RocReport(auc, roc_curve(labels, scores), int((~labels).sum()), int(labels.sum()))


def accuracy_at_threshold(frames: Sequence[ScoredFrame], tau: float) -> tuple[dict, float]:
    """Per-video accuracy and their unweighted mean."""
    per_video: dict[str, list] = {}
    for f in frames:
        per_video.setdefault(f.video_id, []).append((f.score > tau) == f.is_fake)
    acc = {v: float(np.mean(hits)) for v, hits in sorted(per_video.items())}
    if not acc:
        raise ValueError("no frames to score")
    return acc, float(np.mean(list(acc.values())))


def youden_threshold(is_fake, scores) -> tuple[float, float]:
    """Smallest candidate tau maximizing tpr - fpr under "fake iff score > tau"."""
    is_fake = np.asarray(is_fake, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_fake = int(is_fake.sum())
    n_real = len(is_fake) - n_fake
    if n_fake == 0 or n_real == 0:
        raise SingleClass(f"need both classes, got {n_real} real and {n_fake} fake")
    cand = np.unique(scores)
    fake_sorted = np.sort(scores[is_fake])
    real_sorted = np.sort(scores[~is_fake])
    tpr = (n_fake - np.searchsorted(fake_sorted, cand, side="right")) / n_fake
    fpr = (n_real - np.searchsorted(real_sorted, cand, side="right")) / n_real
    j = tpr - fpr
    best = int(np.flatnonzero(j == j.max())[0])
    return float(cand[best]), float(j[best])


def calibrate_threshold(frames: Sequence[ScoredFrame]) -> float:
    labels, scores = _split(frames)
    return youden_threshold(labels, scores)[0]


def _best_accuracy_threshold(dist: np.ndarray, same: np.ndarray) -> float:
    cand = np.unique(dist)
    acc = [np.mean((dist <= t) == same) for t in cand]
    return float(cand[int(np.argmax(acc))])


def pair_verification_accuracy(pairs, folds: int = 10) -> float:
    """K-fold accuracy of "same identity iff distance <= tau" over embedding pairs.

    ``pairs`` holds ``(emb_a, emb_b, same)``. Folds are contiguous blocks; tau
    for each fold maximizes accuracy on the remaining folds (smallest on ties).
    """
    if len(pairs) < folds or folds < 2:
        raise TooFewPairs(f"{len(pairs)} pairs cannot fill {folds} folds")
    a = np.array([p[0] for p in pairs], dtype=np.float64)
    b = np.array([p[1] for p in pairs], dtype=np.float64)
    same = np.array([bool(p[2]) for p in pairs])
    dist = np.clip(1.0 - np.sum(a * b, axis=1), 0.0, 2.0)
    accs = []
    for held in np.array_split(np.arange(len(pairs)), folds):
        train = np.setdiff1d(np.arange(len(pairs)), held)
        if same[train].all() or not same[train].any():
            raise TooFewPairs("a training fold lacks one of the pair classes")
        tau = _best_accuracy_threshold(dist[train], same[train])
        accs.append(np.mean((dist[held] <= tau) == same[held]))
    return float(np.mean(accs))
