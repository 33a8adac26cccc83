"""Landmark-driven face geometry: eye alignment, cropping and inner-face masks.

Landmarks follow the iBUG 68-point order. Public index constants are 0-based;
user-facing text (config files, CLI help) uses the 1-based numbering of the
usual 68-point legend, converted once in :func:`parse_index_ranges`.

Pixel convention: pixel ``(r, c)`` has its center at ``(x=c, y=r)``.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateLandmarks, DimMismatch, EmptySubset, OutOfBounds

N_LANDMARKS = 68

JAW = tuple(range(0, 17))
BROWS = tuple(range(17, 27))
NOSE = tuple(range(27, 36))
RIGHT_EYE = tuple(range(36, 42))  # points 37-42
LEFT_EYE = tuple(range(42, 48))  # points 43-48
MOUTH = tuple(range(48, 68))

EYE_REGION = RIGHT_EYE + LEFT_EYE  # 37-48
INNER_FACE = tuple(range(17, 68))  # 18-68, 51 points
ALL_POINTS = tuple(range(N_LANDMARKS))

CANONICAL_EYE_X = 0.5
CANONICAL_EYE_Y = 0.45
OUT_OF_BOUNDS_TOLERANCE = 0.05


def parse_index_ranges(text: str) -> tuple[int, ...]:
    """Parse 1-based ranges such as ``"18-68"`` or ``"37-42,43-48"`` to 0-based indices."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(v) for v in part.split("-", 1))
        else:
            lo = hi = int(part)
        if not 1 <= lo <= hi <= N_LANDMARKS:
            raise ValueError(f"landmark range out of 1..{N_LANDMARKS}: {part!r}")
        out.extend(range(lo - 1, hi))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 2):
            raise ValueError(f"expected {N_LANDMARKS}x2 landmarks, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __eq__(self, other):
        return isinstance(other, LandmarkSet) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def eye_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points[list(RIGHT_EYE)].mean(axis=0), self.points[list(LEFT_EYE)].mean(axis=0)

    def transformed(self, matrix: np.ndarray) -> "LandmarkSet":
        """Apply a 2x3 affine matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        return LandmarkSet(self.points @ m[:, :2].T + m[:, 2])

    @classmethod
    def load(cls, path) -> "LandmarkSet":
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                x, y = line.split(",")
                rows.append((float(x), float(y)))
        return cls(np.array(rows))

    def save(self, path) -> None:
        lines = [f"{x!r},{y!r}" for x, y in self.points.tolist()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def landmark_distance(a: LandmarkSet, b: LandmarkSet) -> float:
    """Euclidean norm of the 136-d stacked coordinate difference."""
    return float(np.linalg.norm((a.points - b.points).ravel()))


@dataclass(frozen=True)
class CropSpec:
    eye_dist_ratio: float = 0.27
    output_size: int = 112

    def __post_init__(self):
        if not 0.0 < self.eye_dist_ratio < 0.5:
            raise ValueError("eye_dist_ratio must lie in (0, 0.5)")
        if self.output_size < 16:
            raise ValueError("output_size must be >= 16")

    @property
    def eye_distance_px(self) -> float:
        return self.eye_dist_ratio * self.output_size

    @property
    def eye_midpoint(self) -> tuple[float, float]:
        return CANONICAL_EYE_X * self.output_size, CANONICAL_EYE_Y * self.output_size


@dataclass(frozen=True, eq=False)
class FaceImage:
    """H x W x 3 float pixels on the 0-255 scale plus a provenance record."""

    pixels: np.ndarray
    source: str = ""
    transforms: tuple[str, ...] = ()

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]

    def derive(self, pixels: np.ndarray, step: str) -> "FaceImage":
        return FaceImage(pixels, self.source, self.transforms + (step,))


def similarity_matrix(landmarks: LandmarkSet, spec: CropSpec) -> np.ndarray:
    """2x3 matrix mapping raw-image coordinates to crop coordinates."""
    right, left = landmarks.eye_centers()
    delta = left - right
    dist = math.hypot(delta[0], delta[1])
    if dist < 1e-9:
        raise DegenerateLandmarks("eye centers coincide; similarity transform undefined")
    scale = spec.eye_distance_px / dist
    angle = math.atan2(delta[1], delta[0])
    cos_a, sin_a = math.cos(-angle) * scale, math.sin(-angle) * scale
    linear = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    mid = (right + left) / 2.0
    target = np.array(spec.eye_midpoint)
    return np.hstack([linear, (target - linear @ mid)[:, None]])


def invert_affine(matrix: np.ndarray) -> np.ndarray:
    linear = np.linalg.inv(matrix[:, :2])
    return np.hstack([linear, (-linear @ matrix[:, 2])[:, None]])


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``image`` (H x W x C) at float coordinates; samples outside read as 0."""
    h, w = image.shape[:2]
    # strip float noise from transform composition so integer shifts copy exactly
    xs = np.where(np.abs(xs - np.rint(xs)) < 1e-9, np.rint(xs), xs)
    ys = np.where(np.abs(ys - np.rint(ys)) < 1e-9, np.rint(ys), ys)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    flat = np.asarray(image, dtype=np.float64).reshape(h * w, -1)
    out = np.zeros((xs.size, flat.shape[1]))
    fx, fy = fx.reshape(-1, 1), fy.reshape(-1, 1)
    x0, y0 = x0.ravel(), y0.ravel()
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            idx = np.where(valid, yy * w + xx, 0)
            out += (wy * wx * valid[:, None]) * flat[idx]
    return out.reshape(xs.shape + image.shape[2:])


def fit_landmarks(landmarks: LandmarkSet, h: int, w: int) -> LandmarkSet:
    """Clamp a few stray landmarks onto an ``h x w`` image; too many raise OutOfBounds."""
    pts = landmarks.points
    outside = (pts[:, 0] < -0.5) | (pts[:, 0] > w - 0.5) | (pts[:, 1] < -0.5) | (pts[:, 1] > h - 0.5)
    if outside.mean() > OUT_OF_BOUNDS_TOLERANCE:
        raise OutOfBounds(f"{int(outside.sum())} of {N_LANDMARKS} landmarks outside the {w}x{h} image")
    if not outside.any():
        return landmarks
    return LandmarkSet(np.column_stack([np.clip(pts[:, 0], -0.5, w - 0.5), np.clip(pts[:, 1], -0.5, h - 0.5)]))


def crop_space_landmarks(landmarks: LandmarkSet, image_dims: tuple[int, int], spec: CropSpec) -> LandmarkSet:
    """Landmarks as :func:`align_and_crop` would return them, without touching pixels."""
    landmarks = fit_landmarks(landmarks, *image_dims)
    return landmarks.transformed(similarity_matrix(landmarks, spec))


def align_and_crop(image, landmarks: LandmarkSet, spec: CropSpec = CropSpec()):
    """Warp ``image`` so the eyes sit on a horizontal axis at the canonical position.

    Returns ``(FaceImage, LandmarkSet)`` with landmarks in crop coordinates.
    ``image`` may be a raw ``H x W x 3`` array or a :class:`FaceImage`.
    """
    face = image if isinstance(image, FaceImage) else FaceImage(image)
    h, w = face.shape
    landmarks = fit_landmarks(landmarks, h, w)
    matrix = similarity_matrix(landmarks, spec)
    inverse = invert_affine(matrix)
    size = spec.output_size
    gy, gx = np.mgrid[0:size, 0:size].astype(np.float64)
    src_x = inverse[0, 0] * gx + inverse[0, 1] * gy + inverse[0, 2]
    src_y = inverse[1, 0] * gx + inverse[1, 1] * gy + inverse[1, 2]
    pixels = bilinear_sample(face.pixels, src_x, src_y)
    step = f"crop(ratio={spec.eye_dist_ratio},size={size})"
    return face.derive(pixels, step), landmarks.transformed(matrix)


class MaskType(str, enum.Enum):
    NONE = "none"
    EYE = "eye"
    HULL = "hull"
    UNITE = "unite"
    INNER = "inner"

    @property
    def subset(self) -> tuple[int, ...]:
        return _MASK_SUBSETS[self]

    @property
    def is_hull(self) -> bool:
        return self in (MaskType.EYE, MaskType.HULL)


_MASK_SUBSETS = {
    MaskType.NONE: (),
    MaskType.EYE: EYE_REGION,
    MaskType.HULL: INNER_FACE,
    MaskType.UNITE: ALL_POINTS,
    MaskType.INNER: INNER_FACE,
}


@dataclass(frozen=True)
class MaskSpec:
    mask_type: MaskType = MaskType.INNER
    radius_k: int = 13
    landmark_subset: tuple[int, ...] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "mask_type", MaskType(self.mask_type))
        if self.landmark_subset is None:
            object.__setattr__(self, "landmark_subset", self.mask_type.subset)
        if self.radius_k < 1:
            raise ValueError("radius_k must be >= 1")

    def fingerprint(self) -> str:
        text = f"{self.mask_type.value}|{self.radius_k}|{','.join(map(str, self.landmark_subset))}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _hull_mask(points: np.ndarray, h: int, w: int) -> np.ndarray:
    hull = convex_hull(points)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    if len(hull) == 1:
        return (np.abs(xs - hull[0, 0]) < 1e-9) & (np.abs(ys - hull[0, 1]) < 1e-9)
    if len(hull) == 2:
        # collinear subset: the hull is a segment
        (ax, ay), (bx, by) = hull
        ex, ey = bx - ax, by - ay
        length = math.hypot(ex, ey)
        cross = ex * (ys - ay) - ey * (xs - ax)
        t = ((xs - ax) * ex + (ys - ay) * ey) / (length * length)
        return (np.abs(cross) <= 1e-9 * length) & (t >= -1e-12) & (t <= 1 + 1e-12)
    inside = np.ones((h, w), dtype=bool)
    for i in range(len(hull)):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % len(hull)]
        length = math.hypot(bx - ax, by - ay)
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        inside &= cross >= -1e-9 * length
    return inside


def _disk_union(points: np.ndarray, radius: float, h: int, w: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    yy, xx = np.ogrid[0:h, 0:w]
    mask = np.zeros((h, w), dtype=bool)
    r2 = float(radius) ** 2
    for chunk in np.array_split(pts, max(1, len(pts) // 16)):  # bounds the temporary to 16 grids
        x, y = chunk[:, 0, None, None], chunk[:, 1, None, None]
        mask |= ((xx - x) ** 2 + (yy - y) ** 2 <= r2).any(axis=0)
    return mask


def build_mask(spec: MaskSpec, landmarks: LandmarkSet, dims: tuple[int, int]) -> np.ndarray:
    """Rasterize ``spec`` over an ``H x W`` grid. ``True`` marks an eliminated pixel."""
    h, w = dims
    if spec.mask_type is MaskType.NONE:
        return np.zeros((h, w), dtype=bool)
    if spec.radius_k > min(h, w) / 2 and not spec.mask_type.is_hull:
        raise ValueError(f"radius_k={spec.radius_k} exceeds half the output size")
    points = landmarks.points[list(spec.landmark_subset)]
    if spec.mask_type.is_hull:
        if len(points) < 3:
            raise EmptySubset(f"hull mask needs >= 3 landmarks, got {len(points)}")
        return _hull_mask(points, h, w)
    if len(points) == 0:
        raise EmptySubset("point-wise mask with an empty landmark subset")
    return _disk_union(points, spec.radius_k, h, w)


def apply_mask(image: FaceImage, mask: np.ndarray, fill: float = 0.0) -> FaceImage:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape:
        raise DimMismatch(f"mask {mask.shape} vs image {image.shape}")
    if not mask.any():
        return image
    pixels = image.pixels.copy()
    pixels[mask] = fill
    return image.derive(pixels, "mask")
