"""Occlusion saliency: slide a filled patch over the crop and measure embedding shift."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..verification import cosine_distance


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # rows x cols, one value per occluder position
    patch: int
    stride: int

    def to_csv(self) -> str:
        rows = [",".join(repr(float(v)) for v in row) for row in self.values]
        return "\n".join(rows) + "\n"


def occluder_positions(size: int, patch: int, stride: int) -> np.ndarray:
    return np.arange(0, size - patch + 1, stride)


def occlusion_saliency(model, image: np.ndarray, reference_embedding=None, patch: int = 16, stride: int = 8,
                       fill: float = 0, mask: np.ndarray | None = None, batch_size: int = 128) -> SaliencyMap:
    """Map of embedding displacement per occluded patch.

    ``image`` is the model-ready ``S x S x 3`` crop. ``mask`` (True = hidden)
    is re-applied after occlusion, mirroring the detector's preprocessing.
    Without a reference each cell is the cosine distance between occluded and
    unoccluded embeddings; with one it is the absolute change in distance to
    the reference.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if patch < 1 or stride < 1 or patch > min(h, w):
        raise ValueError(f"patch {patch} / stride {stride} invalid for a {h}x{w} image")
    ys = occluder_positions(h, patch, stride)
    xs = occluder_positions(w, patch, stride)
    base = model.embed(image)
    base_score = None if reference_embedding is None else cosine_distance(base, reference_embedding)

    values = np.zeros((len(ys), len(xs)))
    pending, where = [], []
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            occ = image.copy()
            occ[y:y + patch, x:x + patch] = fill
            if mask is not None:
                occ[mask] = 0
            if np.array_equal(occ, image):
                continue  # network input unchanged
            pending.append(occ)
            where.append((i, j))
    for k in range(0, len(pending), batch_size):
        emb = model.embed(np.stack(pending[k:k + batch_size]))
        for (i, j), e in zip(where[k:k + batch_size], emb):
            if base_score is None:
                values[i, j] = cosine_distance(e, base)
            else:
                values[i, j] = abs(cosine_distance(e, reference_embedding) - base_score)
    return SaliencyMap(values, patch, stride)
