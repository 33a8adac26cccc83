"""Identity verification: embedding distances, reference selection, decisions."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateMean, PoolTooSmall, PreprocessingMismatch
from .geometry import LandmarkSet, landmark_distance, similarity_matrix
from .pipeline import Preprocessor, load_image

MAX_REFERENCES = 50


class Strategy(str, enum.Enum):
    RANDOM = "random"
    NEAREST = "nearest"
    FARTHEST = "farthest"


class Decision(str, enum.Enum):
    REAL = "real"
    FAKE = "fake"


def cosine_distance(a, b) -> float:
    """``1 - <a, b>`` for unit vectors, clipped to [0, 2]."""
    return float(np.clip(1.0 - np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)), 0.0, 2.0))


def decide(distance: float, tau: float) -> Decision:
    return Decision.FAKE if distance > tau else Decision.REAL


@dataclass(frozen=True, eq=False)
class ReferenceCandidate:
    candidate_id: str
    video_id: str
    landmarks: LandmarkSet  # raw-image coordinates
    image: Optional[np.ndarray] = None
    image_path: Optional[str] = None

    def load(self):
        return self.image if self.image is not None else load_image(self.image_path)


@dataclass(frozen=True)
class ReferencePool:
    candidates: tuple
    strategy: Strategy = Strategy.RANDOM
    count: int = 1
    seed: int = 0
    suspect_video_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not 1 <= self.count <= MAX_REFERENCES:
            raise ValueError(f"reference count must lie in 1..{MAX_REFERENCES}")
        if self.suspect_video_id is not None:
            shared = [c.candidate_id for c in self.candidates if c.video_id == self.suspect_video_id]
            if shared:
                raise ValueError(f"reference candidates share the suspect's video: {shared[:3]}")


def select_reference(suspect_landmarks: LandmarkSet, candidates: Sequence, strategy, count: int,
                     seed: int = 0, landmarks_of=None) -> list:
    """Pick ``count`` candidates by landmark proximity to the suspect or at random.

    ``landmarks_of`` maps a candidate to the LandmarkSet compared against
    ``suspect_landmarks`` (both must share a coordinate frame); it defaults
    to ``candidate.landmarks``.
    """
    strategy = Strategy(strategy)
    if not candidates or count > len(candidates):
        raise PoolTooSmall(f"need {count} references, pool has {len(candidates)}")
    if strategy is Strategy.RANDOM:
        picks = np.random.default_rng(seed).choice(len(candidates), size=count, replace=False)
        return [candidates[int(i)] for i in picks]
    landmarks_of = landmarks_of or (lambda c: c.landmarks)
    dists = [(landmark_distance(suspect_landmarks, landmarks_of(c)), c.candidate_id, k)
             for k, c in enumerate(candidates)]
    if strategy is Strategy.NEAREST:
        dists.sort(key=lambda t: (t[0], t[1]))
    else:
        dists.sort(key=lambda t: (-t[0], t[1]))
    return [candidates[k] for _, _, k in dists[:count]]


def aggregate_references(embeddings) -> np.ndarray:
    """Mean of unit embeddings, renormalized."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim == 1:
        emb = emb[None]
    if len(emb) == 0:
        raise ValueError("no embeddings to aggregate")
    mean = emb.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise DegenerateMean("reference embeddings cancel out")
    return mean / norm


@dataclass(frozen=True)
class VerificationConfig:
    tau: float = 0.5
    preprocessor: Preprocessor = field(default_factory=Preprocessor)

    def __post_init__(self):
        if not 0.0 <= self.tau <= 2.0:
            raise ValueError("tau must lie in [0, 2]")


@dataclass(frozen=True)
class VerificationResult:
    distance: float
    decision: Decision
    chosen_reference_ids: tuple

    def to_dict(self) -> dict:
        return {"distance": self.distance, "decision": self.decision.value,
                "references": list(self.chosen_reference_ids)}


def check_preprocessing(model, pre: Preprocessor) -> None:
    trained = getattr(model, "meta", {}).get("preprocessing")
    if trained is not None and Preprocessor.from_dict(trained).fingerprint() != pre.fingerprint():
        raise PreprocessingMismatch(
            f"model was trained with {trained}, verification uses {pre.to_dict()}")


def verify(model, suspect, pool: ReferencePool, cfg: VerificationConfig) -> VerificationResult:
    """Decide whether ``suspect = (image, raw landmarks)`` shows the pool's identity."""
    pre = cfg.preprocessor
    check_preprocessing(model, pre)
    image, landmarks = suspect
    _, suspect_crop_lm = pre.crop_face(image, landmarks)
    matrices = {}

    def crop_landmarks(c):
        if c.candidate_id not in matrices:
            matrices[c.candidate_id] = c.landmarks.transformed(similarity_matrix(c.landmarks, pre.crop))
        return matrices[c.candidate_id]

    chosen = select_reference(suspect_crop_lm, list(pool.candidates), pool.strategy, pool.count,
                              pool.seed, landmarks_of=crop_landmarks)
    suspect_emb = model.embed(pre(image, landmarks))
    refs = np.stack([pre(c.load(), c.landmarks) for c in chosen])
    ref_emb = aggregate_references(model.embed(refs))
    distance = cosine_distance(suspect_emb, ref_emb)
    return VerificationResult(distance, decide(distance, cfg.tau), tuple(c.candidate_id for c in chosen))
