"""Identity-even evaluation sampling and reference-pool construction."""
from __future__ import annotations

import logging

import numpy as np

from ..errors import InsufficientFrames, NoEligibleReferences
from ..seeding import sub_seed
from .manifest import Manifest, ManifestEntry

log = logging.getLogger(__name__)

FULL_SCALE_FRAMES_PER_CLASS = 20000
DEFAULT_POOL_SIZE = 100


def _round_robin(groups: dict[str, list], n: int) -> list:
    out = []
    queues = {k: list(v) for k, v in sorted(groups.items())}
    while len(out) < n:
        progressed = False
        for key in queues:
            if queues[key] and len(out) < n:
                out.append(queues[key].pop(0))
                progressed = True
        if not progressed:
            break
    return out


def sample_frames(manifest: Manifest, n_per_class: int, seed: int = 0, split: str = "test") -> list[ManifestEntry]:
    """``n_per_class`` real then ``n_per_class`` fake suspects, spread evenly over identities.

    Identities are visited round-robin in sorted order; frames within an
    identity are shuffled by ``seed``.
    """
    chosen = []
    for label in ("real", "fake"):
        pool = manifest.select(split=split, label=label, role="suspect")
        if len(pool) < n_per_class:
            raise InsufficientFrames(f"{split}/{label}: need {n_per_class}, have {len(pool)}")
        groups: dict[str, list] = {}
        for e in pool:
            groups.setdefault(e.identity, []).append(e)
        for ident, items in groups.items():
            rng = np.random.default_rng(sub_seed(seed, label, ident))
            groups[ident] = [items[i] for i in rng.permutation(len(items))]
        chosen.extend(_round_robin(groups, n_per_class))
    return chosen


def eligible_references(manifest: Manifest, identity: str, suspect_video_id: str) -> list[ManifestEntry]:
    return [e for e in manifest.select(label="real", role="reference_candidate", identity=identity)
            if e.video_id != suspect_video_id]


def build_reference_pool(manifest: Manifest, identity: str, suspect_video_id: str,
                         pool_size: int = DEFAULT_POOL_SIZE, seed: int = 0, warn: bool = True) -> list[ManifestEntry]:
    """Uniform sample of the identity's real reference candidates outside the suspect's video."""
    eligible = eligible_references(manifest, identity, suspect_video_id)
    if not eligible:
        raise NoEligibleReferences(f"{identity}: no reference candidates outside video {suspect_video_id}")
    if len(eligible) <= pool_size:
        if warn and len(eligible) < pool_size:
            log.warning("%s: only %d eligible references (wanted %d)", identity, len(eligible), pool_size)
        return eligible
    picks = np.random.default_rng(seed).choice(len(eligible), size=pool_size, replace=False)
    return [eligible[int(i)] for i in sorted(picks)]
