"""Shared preprocessing: align, crop, mask, quantize.

Training, verification, evaluation and saliency all go through
:class:`Preprocessor` so suspect and reference images are prepared the same way.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoFailure
from .geometry import (
    CropSpec, FaceImage, LandmarkSet, MaskSpec, MaskType, align_and_crop, apply_mask, build_mask, crop_space_landmarks,
)


def load_image(path) -> FaceImage:
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc
    return FaceImage(pixels, source=str(path))


def save_image(pixels: np.ndarray, path) -> None:
    arr = np.clip(np.rint(np.asarray(pixels)), 0, 255).astype(np.uint8)
    try:
        Image.fromarray(arr).save(path)
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc


def quantize(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Preprocessor:
    crop: CropSpec = field(default_factory=CropSpec)
    mask: MaskSpec = field(default_factory=MaskSpec)

    def fingerprint(self) -> str:
        text = f"{self.crop.eye_dist_ratio!r}|{self.crop.output_size}|{self.mask.fingerprint()}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "eye_dist_ratio": self.crop.eye_dist_ratio,
            "output_size": self.crop.output_size,
            "mask_type": self.mask.mask_type.value,
            "radius_k": self.mask.radius_k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls(CropSpec(d["eye_dist_ratio"], d["output_size"]), MaskSpec(MaskType(d["mask_type"]), d["radius_k"]))

    def crop_face(self, image, landmarks: LandmarkSet):
        return align_and_crop(image, landmarks, self.crop)

    def mask_for(self, crop_landmarks: LandmarkSet) -> np.ndarray:
        size = self.crop.output_size
        return build_mask(self.mask, crop_landmarks, (size, size))

    def __call__(self, image, landmarks: LandmarkSet) -> np.ndarray:
        """Model-ready ``S x S x 3`` uint8 array."""
        face, crop_lm = self.crop_face(image, landmarks)
        face = apply_mask(face, self.mask_for(crop_lm))
        return quantize(face.pixels)

    def from_files(self, image_path, landmarks_path) -> tuple[np.ndarray, LandmarkSet]:
        """Preprocess one frame from disk; also returns its crop-space landmarks."""
        raw = load_image(image_path)
        lm = LandmarkSet.load(landmarks_path)
        face, crop_lm = self.crop_face(raw, lm)
        face = apply_mask(face, self.mask_for(crop_lm))
        return quantize(face.pixels), crop_lm


def frame_paths(manifest, entry) -> tuple[Path, Path]:
    return manifest.resolve(entry.image_path), manifest.resolve(entry.landmarks_path)


def frame_degrader(spec, frame_id: str):
    """``(stage, callable)`` for ``spec``, or ``None`` when nothing is applied.

    JPEG and down/up-sampling act on the stored 8-bit frame, as they would on
    footage passed around in the wild, so in-process evaluation matches a
    degraded copy of the corpus read back through ``external``. Noise acts on
    the crop, with a per-frame seed.
    """
    from .degradation import DegradationKind, degrade
    from .seeding import sub_seed

    if spec is None or spec.kind in (DegradationKind.NONE, DegradationKind.EXTERNAL):
        return None
    if spec.kind is DegradationKind.NOISE:
        spec = spec.with_seed(sub_seed(spec.seed, frame_id))
        return "crop", lambda face: degrade(face, spec)
    return "frame", lambda face: _stored(degrade(face, spec))


def _stored(face: FaceImage) -> FaceImage:
    """The frame as an 8-bit file would hold it."""
    return FaceImage(quantize(face.pixels).astype(np.float64), face.source, face.transforms)


class FrameCache:
    """Preprocessed manifest frames keyed by frame id and degradation label.

    ``reads`` counts every frame loaded from disk, split by label, so callers
    can audit what a training loop actually touched.
    """

    def __init__(self, manifest, pre: Preprocessor):
        self.manifest = manifest
        self.pre = pre
        self._pixels: dict = {}
        self._landmarks: dict = {}
        self.reads = {"real": 0, "fake": 0}

    def _load(self, entry, spec):
        from .degradation import DegradationKind

        img_path, lm_path = frame_paths(self.manifest, entry)
        if spec is not None and spec.kind is DegradationKind.EXTERNAL:
            img_path = Path(spec.tag) / entry.image_path
        self.reads[entry.label] += 1
        raw = load_image(img_path)
        lm = LandmarkSet.load(lm_path)
        stage = frame_degrader(spec, entry.frame_id)
        if stage is not None and stage[0] == "frame":
            raw = stage[1](raw)
        face, crop_lm = self.pre.crop_face(raw, lm)
        if stage is not None and stage[0] == "crop":
            face = stage[1](face)
        face = apply_mask(face, self.pre.mask_for(crop_lm))
        return quantize(face.pixels), crop_lm

    def get(self, entry, spec=None):
        key = (entry.frame_id, spec.label() if spec is not None else "none")
        if key not in self._pixels:
            self._pixels[key], self._landmarks[entry.frame_id] = self._load(entry, spec)
        return self._pixels[key], self._landmarks[entry.frame_id]

    def crop_landmarks(self, entry) -> LandmarkSet:
        """Crop-space landmarks, computed from the sidecar alone (no pixel read)."""
        if entry.frame_id not in self._landmarks:
            img_path, lm_path = frame_paths(self.manifest, entry)
            try:
                with Image.open(img_path) as im:  # header only
                    w, h = im.size
            except OSError as exc:
                raise IoFailure(f"cannot read {img_path}: {exc}") from exc
            self._landmarks[entry.frame_id] = crop_space_landmarks(LandmarkSet.load(lm_path), (h, w), self.pre.crop)
        return self._landmarks[entry.frame_id]

    def batch(self, entries, spec=None) -> np.ndarray:
        size = self.pre.crop.output_size
        out = np.empty((len(entries), size, size, 3), dtype=np.uint8)
        for i, e in enumerate(entries):
            out[i] = self.get(e, spec)[0]
        return out
