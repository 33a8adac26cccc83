"""Manifest-level training: fake-free guard, preprocessing, identity labels."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus.manifest import Manifest
from .embedding.loss import LossConfig
from .embedding.network import EmbeddingModel, ModelConfig
from .embedding.train import TrainResult, TrainSchedule, train
from .errors import EmptyCorpus, FakeInTrainingSplit
from .pipeline import FrameCache, Preprocessor

log = logging.getLogger(__name__)


@dataclass
class ManifestTraining:
    result: TrainResult
    identities: list
    reads: dict  # frames loaded from disk, by label

    @property
    def model(self) -> EmbeddingModel:
        return self.result.model


def train_from_manifest(manifest: Manifest, pre: Preprocessor, schedule: TrainSchedule,
                        loss_cfg: LossConfig = LossConfig(), embed_dim: int = 64,
                        conv_widths=(8, 16, 32, 64), model_seed: int = 0, progress=None,
                        cache: FrameCache | None = None) -> ManifestTraining:
    """Train an embedding model on the train split's real frames only.

    Any fake-labeled train entry aborts before a single frame is read. A
    shared ``cache`` lets a later evaluation reuse the loaded frames.
    """
    manifest.check_fake_free_training()
    entries = manifest.select(split="train")
    if not entries:
        raise EmptyCorpus("manifest has no train entries")
    if cache is None:
        cache = FrameCache(manifest, pre)
    reads_before = dict(cache.reads)
    identities = sorted({e.identity for e in entries})
    index = {ident: i for i, ident in enumerate(identities)}
    images = cache.batch(entries)
    if cache.reads["fake"] != reads_before["fake"]:
        raise FakeInTrainingSplit("training loaded a fake frame")
    labels = np.array([index[e.identity] for e in entries], dtype=np.int64)
    cfg = ModelConfig(input_size=pre.crop.output_size, embed_dim=embed_dim,
                      conv_widths=tuple(conv_widths), n_classes=max(len(identities), 1))
    model = EmbeddingModel(cfg, seed=model_seed, meta={"preprocessing": pre.to_dict()})
    log.info("training on %d frames of %d identities", len(entries), len(identities))
    result = train(model, images, labels, schedule, loss_cfg, progress=progress)
    model.meta.update({
        "identities": len(identities),
        "schedule": {k: list(v) if isinstance(v, tuple) else v for k, v in schedule.__dict__.items()},
        "loss": {"scale": loss_cfg.scale, "margin": loss_cfg.margin},
    })
    reads = {k: cache.reads[k] - reads_before[k] for k in cache.reads}
    return ManifestTraining(result, identities, reads)
