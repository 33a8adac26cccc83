"""Score a manifest split: sample suspects, build reference pools, embed, compute ROC."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from ..corpus.manifest import Manifest
from ..corpus.sampling import DEFAULT_POOL_SIZE, build_reference_pool, sample_frames
from ..degradation import NONE, DegradationSpec
from ..errors import SingleClass
from ..pipeline import FrameCache, Preprocessor
from ..seeding import sub_seed
from ..verification import ReferenceCandidate, Strategy, aggregate_references, check_preprocessing, cosine_distance, select_reference
from .metrics import RocReport, ScoredFrame, roc_auc

log = logging.getLogger(__name__)

SCORE_CONVENTION = "score = 1 - cosine similarity; higher = more likely fake"


@dataclass(frozen=True)
class EvalConfig:
    split: str = "test"
    strategy: Strategy = Strategy.RANDOM
    ref_count: int = 1
    pool_size: int = DEFAULT_POOL_SIZE
    n_per_class: int | None = None  # None: as many as the smaller class allows
    seed: int = 0
    degradation: DegradationSpec = NONE
    degrade_references: bool = True  # False: only suspects are degraded

    def echo(self) -> dict:
        d = asdict(self)
        d["strategy"] = Strategy(self.strategy).value
        d["degradation"] = self.degradation.label()
        return d


@dataclass
class PoolRecord:
    suspect_id: str
    suspect_video_id: str
    pool_ids: list
    chosen_ids: list


@dataclass
class EvalResult:
    frames: list
    roc: RocReport
    pools: list = field(default_factory=list)
    small_pools: int = 0


class Evaluator:
    """Embeds frames once per (frame, degradation) and reuses them across runs."""

    def __init__(self, model, manifest: Manifest, pre: Preprocessor, batch_size: int = 256,
                 frames: FrameCache | None = None):
        check_preprocessing(model, pre)
        self.model = model
        self.manifest = manifest
        if frames is not None and frames.pre.fingerprint() != pre.fingerprint():
            raise ValueError("shared frame cache was built with different preprocessing")
        self.frames = frames if frames is not None else FrameCache(manifest, pre)
        self.batch_size = batch_size
        self._emb: dict = {}

    def embed(self, entries, spec: DegradationSpec = NONE) -> np.ndarray:
        label = spec.label()
        todo = [e for e in dict.fromkeys(entries) if (e.frame_id, label) not in self._emb]
        for i in range(0, len(todo), self.batch_size):
            chunk = todo[i:i + self.batch_size]
            emb = self.model.embed(self.frames.batch(chunk, spec))
            for e, v in zip(chunk, emb):
                self._emb[(e.frame_id, label)] = v
        return np.stack([self._emb[(e.frame_id, label)] for e in entries])

    def run(self, cfg: EvalConfig) -> EvalResult:
        m = self.manifest
        available = {lab: len(m.select(split=cfg.split, label=lab, role="suspect")) for lab in ("real", "fake")}
        if min(available.values()) == 0:
            raise SingleClass(f"{cfg.split} split suspects: {available['real']} real, {available['fake']} fake")
        n = cfg.n_per_class if cfg.n_per_class is not None else min(available.values())
        if n < 1:
            raise ValueError("n_per_class must be positive")
        suspects = sample_frames(m, n, seed=cfg.seed, split=cfg.split)

        plans, records, small = [], [], 0
        for s in suspects:
            pool = build_reference_pool(m, s.identity, s.video_id, cfg.pool_size,
                                        seed=sub_seed(cfg.seed, "pool", s.frame_id), warn=False)
            small += len(pool) < cfg.pool_size
            cands = [ReferenceCandidate(e.frame_id, e.video_id, self.frames.crop_landmarks(e)) for e in pool]
            chosen = select_reference(self.frames.crop_landmarks(s), cands, cfg.strategy, cfg.ref_count,
                                      seed=sub_seed(cfg.seed, "pick", s.frame_id))
            chosen_entries = [m.get(c.candidate_id) for c in chosen]
            plans.append(chosen_entries)
            records.append(PoolRecord(s.frame_id, s.video_id, [e.frame_id for e in pool],
                                      [e.frame_id for e in chosen_entries]))
        if small:
            log.warning("%d of %d reference pools hold fewer than %d candidates", small, len(suspects), cfg.pool_size)

        suspect_emb = self.embed(suspects, cfg.degradation)
        ref_spec = cfg.degradation if cfg.degrade_references else NONE
        self.embed([e for chosen in plans for e in chosen], ref_spec)
        scored = []
        for s, emb, chosen in zip(suspects, suspect_emb, plans):
            ref = aggregate_references(self.embed(chosen, ref_spec))
            scored.append(ScoredFrame(s.frame_id, s.identity, s.video_id, s.is_fake, cosine_distance(emb, ref)))
        return EvalResult(scored, roc_auc(scored), records, small)


def audit_pools(manifest: Manifest, records) -> list[str]:
    """Problems found in pool records: shared videos, wrong identity, fake references."""
    problems = []
    for r in records:
        suspect = manifest.get(r.suspect_id)
        for fid in set(r.pool_ids) | set(r.chosen_ids):
            ref = manifest.get(fid)
            if ref.video_id == suspect.video_id:
                problems.append(f"{r.suspect_id}: reference {fid} shares video {ref.video_id}")
            if ref.identity != suspect.identity:
                problems.append(f"{r.suspect_id}: reference {fid} has identity {ref.identity}")
            if ref.is_fake:
                problems.append(f"{r.suspect_id}: reference {fid} is fake")
        if not set(r.chosen_ids) <= set(r.pool_ids):
            problems.append(f"{r.suspect_id}: chosen references outside its pool")
    return problems
