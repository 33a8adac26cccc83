"""Image degradations for robustness runs: JPEG, down/up-sampling, additive noise."""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .errors import CodecFailure, UnsupportedDims
from .geometry import FaceImage


class DegradationKind(str, enum.Enum):
    NONE = "none"
    JPEG = "jpeg"
    DOWNSAMPLE = "resize"
    NOISE = "noise"
    EXTERNAL = "external"


@dataclass(frozen=True)
class DegradationSpec:
    kind: DegradationKind = DegradationKind.NONE
    quality: int = 75
    factor: int = 2
    sigma: float = 5.0
    seed: int = 0
    tag: Optional[str] = None  # external frames: directory mirroring the manifest's image paths

    def __post_init__(self):
        object.__setattr__(self, "kind", DegradationKind(self.kind))
        if self.kind is DegradationKind.JPEG and not 1 <= self.quality <= 100:
            raise ValueError("jpeg quality must lie in 1..100")
        if self.kind is DegradationKind.DOWNSAMPLE and (int(self.factor) != self.factor or self.factor < 2):
            raise ValueError("downsample factor must be an integer >= 2")
        if self.kind is DegradationKind.NOISE and not self.sigma > 0:
            raise ValueError("noise sigma must be positive")
        if self.kind is DegradationKind.EXTERNAL and not self.tag:
            raise ValueError("external frames need a tag")

    @classmethod
    def parse(cls, text: str) -> "DegradationSpec":
        """``none``, ``jpeg:Q``, ``resize:F``, ``noise:SIGMA[:SEED]`` or ``external:DIR``."""
        kind, _, rest = text.strip().partition(":")
        kind = kind.lower()
        try:
            if kind in ("", "none"):
                return cls()
            if kind == "jpeg":
                return cls(DegradationKind.JPEG, quality=int(rest))
            if kind in ("resize", "downsample"):
                return cls(DegradationKind.DOWNSAMPLE, factor=int(rest))
            if kind == "noise":
                sigma, _, seed = rest.partition(":")
                return cls(DegradationKind.NOISE, sigma=float(sigma), seed=int(seed or 0))
            if kind == "external":
                return cls(DegradationKind.EXTERNAL, tag=rest)
        except ValueError as exc:
            raise ValueError(f"bad degradation {text!r}: {exc}") from exc
        raise ValueError(f"unknown degradation kind {kind!r}")

    def label(self) -> str:
        if self.kind is DegradationKind.JPEG:
            return f"jpeg:{self.quality}"
        if self.kind is DegradationKind.DOWNSAMPLE:
            return f"resize:{self.factor}"
        if self.kind is DegradationKind.NOISE:
            return f"noise:{self.sigma!r}:{self.seed}"
        if self.kind is DegradationKind.EXTERNAL:
            return f"external:{self.tag}"
        return "none"

    def with_seed(self, seed: int) -> "DegradationSpec":
        return DegradationSpec(self.kind, self.quality, self.factor, self.sigma, seed, self.tag)


NONE = DegradationSpec()
JPEG_20 = DegradationSpec(DegradationKind.JPEG, quality=20)
DOWNSAMPLE_4 = DegradationSpec(DegradationKind.DOWNSAMPLE, factor=4)
NOISE_5 = DegradationSpec(DegradationKind.NOISE, sigma=5.0)
PRESETS = {"jpeg20": JPEG_20, "resize4": DOWNSAMPLE_4, "noise5": NOISE_5}


def jpeg_roundtrip(pixels: np.ndarray, quality: int) -> np.ndarray:
    arr = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    try:
        Image.fromarray(arr).save(buf, format="JPEG", quality=int(quality))
        buf.seek(0)
        with Image.open(buf) as im:
            out = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise CodecFailure(f"jpeg round trip failed: {exc}") from exc
    if out.shape != arr.shape:
        raise CodecFailure(f"jpeg round trip changed shape {arr.shape} -> {out.shape}")
    return out


def _upsample_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    """Bilinear resize along one axis with pixel-center alignment and edge clamping."""
    n_in = x.shape[axis]
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    w = pos - lo
    shape = [1] * x.ndim
    shape[axis] = n_out
    w = w.reshape(shape)
    return np.take(x, lo, axis=axis) * (1 - w) + np.take(x, hi, axis=axis) * w


def down_up_sample(pixels: np.ndarray, factor: int, strict: bool = False) -> np.ndarray:
    """Area-average by ``factor`` then bilinear back to the input size.

    Sizes not divisible by ``factor`` are reflect-padded and centre-cropped
    afterwards, unless ``strict`` asks for UnsupportedDims instead.
    """
    h, w = pixels.shape[:2]
    ph, pw = (-h) % factor, (-w) % factor
    if (ph or pw) and strict:
        raise UnsupportedDims(f"factor {factor} does not divide {h}x{w}")
    if ph >= h or pw >= w or factor > min(h, w):
        raise UnsupportedDims(f"factor {factor} too large for {h}x{w}")
    top, left = ph // 2, pw // 2
    x = np.pad(pixels, ((top, ph - top), (left, pw - left), (0, 0)), mode="reflect") if (ph or pw) else pixels
    H, W = x.shape[:2]
    small = x.reshape(H // factor, factor, W // factor, factor, -1).mean(axis=(1, 3))
    up = _upsample_axis(_upsample_axis(small, H, 0), W, 1)
    return up[top:top + h, left:left + w]


def add_noise(pixels: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.clip(pixels + rng.normal(0.0, sigma, size=pixels.shape), 0.0, 255.0)


def degrade(image: FaceImage, spec: DegradationSpec, external: FaceImage | None = None) -> FaceImage:
    kind = spec.kind
    if kind is DegradationKind.NONE:
        return image
    if kind is DegradationKind.JPEG:
        return image.derive(jpeg_roundtrip(image.pixels, spec.quality), spec.label())
    if kind is DegradationKind.DOWNSAMPLE:
        return image.derive(down_up_sample(image.pixels, spec.factor), spec.label())
    if kind is DegradationKind.NOISE:
        return image.derive(add_noise(image.pixels, spec.sigma, spec.seed), spec.label())
    if external is None:
        raise ValueError("external degradation needs the substitute frame")
    if external.pixels.shape != image.pixels.shape:
        raise UnsupportedDims(f"external frame {external.pixels.shape} does not match {image.pixels.shape}")
    return image.derive(external.pixels, spec.label())
