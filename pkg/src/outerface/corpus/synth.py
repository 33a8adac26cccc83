"""Procedural face corpus: a desk-scale stand-in for a real verification dataset.

Each identity owns a code vector split into an inner half (eyes, brows, nose,
mouth) and an outer half (head outline, ears, side tint, forehead texture,
hair). Pixels inside the inner-face region depend only on the inner code and
the per-frame pose/nuisance draw, so a face swap is a composite of the target's
inner render into the source frame.

Face coordinates are measured in inter-eye distances from the eye midpoint,
``u`` to the right and ``v`` downwards.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import IoFailure
from ..geometry import LandmarkSet
from .manifest import Manifest, ManifestEntry

log = logging.getLogger(__name__)

SKIN = np.array([205.0, 165.0, 140.0])
HEAD_CENTER_V = 0.45
INNER_REGION = (0.45, 1.15, 1.45)  # center v, semi-axis u, semi-axis v


@dataclass(frozen=True)
class SynthFaceConfig:
    n_identities: int = 200
    images_per_identity: int = 20
    frames_per_video: int = 2
    identity_dim: int = 32
    pose_jitter: float = 1.0
    max_rotation_deg: float = 15.0
    max_translation_px: float = 5.0
    max_yaw: float = 0.3
    fake_fidelity: float = 1.0
    image_size: int = 168
    eye_distance_px: float = 34.0
    sensor_noise: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_identities < 2:
            raise ValueError("n_identities must be >= 2")
        if not 0.0 <= self.fake_fidelity <= 1.0:
            raise ValueError("fake_fidelity must lie in [0, 1]")
        if self.identity_dim < 32 or self.identity_dim % 2:
            raise ValueError("identity_dim must be an even number >= 32")
        if self.images_per_identity < 1 or self.frames_per_video < 1:
            raise ValueError("images_per_identity and frames_per_video must be positive")
        if not 0.0 <= self.pose_jitter <= 1.0:
            raise ValueError("pose_jitter must lie in [0, 1]")

    @property
    def videos_per_identity(self) -> int:
        return max(1, math.ceil(self.images_per_identity / self.frames_per_video))


@dataclass(frozen=True)
class Pose:
    rotation: float = 0.0  # radians, in-plane
    tx: float = 0.0
    ty: float = 0.0
    scale: float = 1.0
    yaw: float = 0.0  # horizontal shift of the inner features, in eye distances


@dataclass(frozen=True)
class Nuisance:
    background: tuple = (120.0, 120.0, 120.0)
    light: float = 1.0
    noise_seed: int = 0


def identity_code(cfg: SynthFaceConfig, index: int) -> np.ndarray:
    return np.random.default_rng([cfg.rng_seed, 0, index]).standard_normal(cfg.identity_dim)


def split_code(code: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = len(code) // 2
    return np.tanh(code[:half]), np.tanh(code[half:])


# ---------------------------------------------------------------- shapes

def _alpha(sd_units: np.ndarray, px_per_unit: float) -> np.ndarray:
    """Coverage from a signed distance in face units (negative inside)."""
    return np.clip(0.5 - sd_units * np.float32(px_per_unit), 0.0, 1.0)


def _ellipse_sd(u, v, cu, cv, a, b):
    return (np.sqrt(((u - cu) / a) ** 2 + ((v - cv) / b) ** 2) - 1.0) * min(a, b)


def _smoothstep(e0, e1, x):
    t = np.clip((x - e0) / (e1 - e0), 0.0, 1.0)
    return t * t * (3 - 2 * t)


@dataclass(frozen=True)
class _InnerGeom:
    eye_x: float
    eye_a: float
    eye_b: float
    brow_v: float
    brow_thick: float
    nose_w: float
    mouth_v: float
    mouth_a: float
    mouth_b: float


def _inner_geom(inner: np.ndarray) -> _InnerGeom:
    return _InnerGeom(
        eye_x=0.5 * (1 + 0.04 * inner[5]),
        eye_a=0.2 + 0.03 * inner[6],
        eye_b=0.09 + 0.025 * inner[7],
        brow_v=-0.38 - 0.05 * inner[0],
        brow_thick=0.08 + 0.03 * inner[1],
        nose_w=1.0 + 0.25 * inner[11],
        mouth_v=1.08 + 0.06 * inner[12],
        mouth_a=0.38 + 0.07 * inner[13],
        mouth_b=0.1 + 0.03 * inner[14],
    )


def _outer_geom(outer: np.ndarray) -> tuple[float, float]:
    return 1.6 + 0.15 * outer[0], 2.0 + 0.12 * outer[1]


def face_landmarks(inner: np.ndarray, outer: np.ndarray, yaw: float = 0.0) -> np.ndarray:
    """68 landmarks in face coordinates (iBUG order)."""
    g = _inner_geom(inner)
    head_a, head_b = _outer_geom(outer)
    du, dn = 0.3 * yaw, 0.45 * yaw
    pts = np.zeros((68, 2))
    ts = (math.pi + 0.2) - np.arange(17) * (math.pi + 0.4) / 16
    pts[0:17] = np.column_stack([head_a * np.cos(ts), HEAD_CENTER_V + head_b * np.sin(ts)])
    for side, sl, xs in ((-1, slice(17, 22), np.linspace(-0.3, 0.25, 5)),
                         (1, slice(22, 27), np.linspace(-0.25, 0.3, 5))):
        cx = side * g.eye_x + du
        xx = cx + xs
        pts[sl] = np.column_stack([xx, g.brow_v + 0.1 * (xs / 0.3) ** 2])
    pts[27:31] = np.column_stack([np.full(4, dn), 0.12 + 0.16 * np.arange(4)])
    pts[31:36] = np.column_stack([dn + 0.1 * g.nose_w * np.arange(-2, 3), np.full(5, 0.68)])
    eye_angles = {-1: [math.pi, 2 * math.pi / 3, math.pi / 3, 0.0, -math.pi / 3, -2 * math.pi / 3],
                  1: [math.pi, 2 * math.pi / 3, math.pi / 3, 0.0, -math.pi / 3, -2 * math.pi / 3]}
    for side, start in ((-1, 36), (1, 42)):
        ang = np.array(eye_angles[side])
        pts[start:start + 6] = np.column_stack([side * g.eye_x + du + g.eye_a * np.cos(ang), -g.eye_b * np.sin(ang)])
    outer_ang = np.array([math.pi, 5, 4, 3, 2, 1, 0, -1, -2, -3, -4, -5], dtype=float)
    outer_ang[1:] = outer_ang[1:] * math.pi / 6
    pts[48:60] = np.column_stack([du + g.mouth_a * np.cos(outer_ang), g.mouth_v - g.mouth_b * np.sin(outer_ang)])
    inner_ang = np.array([4, 3, 2, 1, 0, -1, -2, -3], dtype=float) * math.pi / 4
    pts[60:68] = np.column_stack([du + 0.8 * g.mouth_a * np.cos(inner_ang),
                                  g.mouth_v - 0.4 * g.mouth_b * np.sin(inner_ang)])
    return pts


# ---------------------------------------------------------------- rendering

def _face_grid(cfg: SynthFaceConfig, pose: Pose):
    size = cfg.image_size
    unit = cfg.eye_distance_px * pose.scale
    cx, cy = size / 2 + pose.tx, size / 2 - HEAD_CENTER_V * unit + pose.ty
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    dx, dy = xs - np.float32(cx), ys - np.float32(cy)
    c, s = np.float32(math.cos(pose.rotation) / unit), np.float32(math.sin(pose.rotation) / unit)
    u = c * dx + s * dy
    v = c * dy - s * dx
    return u, v, unit, (cx, cy)


def to_raw(points: np.ndarray, cfg: SynthFaceConfig, pose: Pose) -> np.ndarray:
    unit = cfg.eye_distance_px * pose.scale
    cx, cy = cfg.image_size / 2 + pose.tx, cfg.image_size / 2 - HEAD_CENTER_V * unit + pose.ty
    c, s = math.cos(pose.rotation), math.sin(pose.rotation)
    u, v = points[:, 0] * unit, points[:, 1] * unit
    return np.column_stack([cx + c * u - s * v, cy + s * u + c * v])


def inner_region(cfg: SynthFaceConfig, pose: Pose, grid=None) -> np.ndarray:
    """Boolean raw-image mask of the region a face swap replaces."""
    u, v, _, _ = grid if grid is not None else _face_grid(cfg, pose)
    cv, a, b = INNER_REGION
    return ((u - 0.3 * pose.yaw) / a) ** 2 + ((v - cv) / b) ** 2 <= 1.0


def _render_outer(outer, u, v, unit, nuis: Nuisance):
    img = np.empty(u.shape + (3,), dtype=np.float32)
    img[:] = np.asarray(nuis.background, dtype=np.float32) * (1.0 + 0.15 * np.clip(v / 3.0, -1, 1))[..., None]
    head_a, head_b = _outer_geom(outer)
    ear_color = 150 + 80 * outer[2:5]
    for side in (-1, 1):
        cu = side * (head_a - 0.03)
        _paint_box(img, u, v, _ellipse_box(cu, 0.2, 0.14, 0.3),
                   lambda uu, vv: _ellipse_sd(uu, vv, cu, 0.2, 0.14, 0.3), unit, ear_color)
    # head skin with the outer-code side tint and forehead ripple
    head = _alpha(_ellipse_sd(u, v, 0.0, HEAD_CENTER_V, head_a, head_b), unit)
    inside = head > 0
    hu, hv = u[inside], v[inside]
    skin = np.broadcast_to(SKIN.astype(np.float32), hu.shape + (3,)).copy()
    side_w = _smoothstep(1.35, 1.6, np.abs(hu))
    skin += side_w[:, None] * (45 * outer[5:8])
    fh_w = _smoothstep(-1.1, -1.35, hv)
    ripple = 28 * outer[9] * np.sin((7.0 + 3.0 * outer[8]) * hu + 3 * outer[10])
    skin += (fh_w * ripple)[:, None]
    _paint_at(img, inside, head[inside], skin)
    # hair cap above the hairline
    top = v < 0.5
    tu, tv = u[top], v[top]
    hairline = -1.42 - 0.1 * outer[11] + 2.5 * np.maximum(np.abs(tu) - 1.3, 0.0)
    cap = _ellipse_sd(tu, tv, 0.0, HEAD_CENTER_V, head_a + 0.12, head_b + 0.25)
    hair = _alpha(np.maximum(cap, tv - hairline), unit)
    hit = hair > 0
    phi = 1.2 * outer[15]
    stripes = 1.0 + 0.18 * np.sin((16 + 5 * outer[15]) * (tu[hit] * math.cos(phi) + tv[hit] * math.sin(phi)))
    idx = np.flatnonzero(top)[hit]
    _paint_at(img, idx, hair[hit], (128 + 110 * outer[12:15]) * stripes[:, None])
    return img


def _paint_at(img, where, alpha, color):
    """Blend ``color`` into ``img[where]`` with per-pixel coverage ``alpha``."""
    color = np.asarray(color, dtype=np.float32)
    sub = img[where]
    sub += alpha[:, None] * (color - sub)
    img[where] = sub


def _paint_box(img, u, v, box, sd_fn, unit, color):
    """Paint a shape whose coverage is zero outside ``box = (u0, u1, v0, v1)``."""
    u0, u1, v0, v1 = box
    m = 1.0 / unit
    idx = np.flatnonzero((u >= u0 - m) & (u <= u1 + m) & (v >= v0 - m) & (v <= v1 + m))
    if idx.size:
        alpha = _alpha(sd_fn(u[idx], v[idx]), unit)
        hit = alpha > 0
        _paint_at(img, idx[hit], alpha[hit], color)


def _ellipse_box(cu, cv, a, b):
    return cu - a, cu + a, cv - b, cv + b


def _render_inner(inner, u, v, unit, yaw):
    g = _inner_geom(inner)
    du, dn = 0.3 * yaw, 0.45 * yaw
    img = np.empty(u.shape + (3,), dtype=np.float32)
    img[:] = SKIN
    brow_color = 100 + 80 * inner[2:5]
    for side, lo, hi in ((-1, -0.3, 0.25), (1, -0.25, 0.3)):
        cx = side * g.eye_x + du

        def brow(uu, vv, cx=cx, lo=lo, hi=hi):
            xs = uu - cx
            curve = g.brow_v + 0.1 * (xs / 0.3) ** 2
            return np.maximum(np.maximum(lo - xs, xs - hi), np.abs(vv - curve) - g.brow_thick / 2)

        box = (cx + lo, cx + hi, g.brow_v - g.brow_thick / 2, g.brow_v + 0.1 + g.brow_thick / 2)
        _paint_box(img, u, v, box, brow, unit, brow_color)
    iris_color = 128 + 110 * inner[8:11]
    for side in (-1, 1):
        cx = side * g.eye_x + du
        eye_box = _ellipse_box(cx, 0.0, g.eye_a, g.eye_b)
        _paint_box(img, u, v, eye_box, lambda uu, vv: _ellipse_sd(uu, vv, cx, 0.0, g.eye_a, g.eye_b), unit,
                   (235.0, 235.0, 230.0))
        _paint_box(img, u, v, eye_box,
                   lambda uu, vv: np.maximum(_ellipse_sd(uu, vv, cx, 0.0, 0.075, 0.075),
                                             _ellipse_sd(uu, vv, cx, 0.0, g.eye_a, g.eye_b)), unit, iris_color)
        _paint_box(img, u, v, _ellipse_box(cx, 0.0, 0.03, 0.03),
                   lambda uu, vv: _ellipse_sd(uu, vv, cx, 0.0, 0.03, 0.03), unit, (20.0, 20.0, 20.0))
    _paint_box(img, u, v, (dn - 0.035, dn + 0.035, 0.12, 0.64),
               lambda uu, vv: np.maximum(np.abs(uu - dn) - 0.035, np.abs(vv - 0.38) - 0.26), unit, SKIN * 0.8)
    nose_a = 0.2 * g.nose_w
    _paint_box(img, u, v, _ellipse_box(dn, 0.66, nose_a, 0.07),
               lambda uu, vv: _ellipse_sd(uu, vv, dn, 0.66, nose_a, 0.07), unit, SKIN * (0.72 + 0.12 * inner[15]))
    lip = np.array([180 + 50 * inner[14], 80 + 40 * inner[15], 90 + 50 * inner[9]])
    _paint_box(img, u, v, _ellipse_box(du, g.mouth_v, g.mouth_a, g.mouth_b),
               lambda uu, vv: _ellipse_sd(uu, vv, du, g.mouth_v, g.mouth_a, g.mouth_b), unit, lip)
    _paint_box(img, u, v, _ellipse_box(du, g.mouth_v, 0.8 * g.mouth_a, 0.3 * g.mouth_b),
               lambda uu, vv: _ellipse_sd(uu, vv, du, g.mouth_v, 0.8 * g.mouth_a, 0.3 * g.mouth_b), unit,
               (60.0, 25.0, 30.0))
    return img


_NOISE_BANK: dict = {}


def _noise_window(shape, rng) -> np.ndarray:
    """Standard-normal field cut from a fixed bank at a random offset (much cheaper than fresh draws)."""
    n = int(np.prod(shape))
    bank = _NOISE_BANK.get(n)
    if bank is None:
        bank = _NOISE_BANK[n] = np.random.default_rng(0x5EED).standard_normal(4 * n, dtype=np.float32)
    start = int(rng.integers(0, 3 * n))
    return bank[start:start + n].reshape(shape)


def render_face(cfg: SynthFaceConfig, inner: np.ndarray, outer: np.ndarray, pose: Pose, nuis: Nuisance,
                seam_noise: float = 0.0):
    """Render one frame. Returns ``(pixels, raw_landmarks)``; pixels are uint8."""
    grid = _face_grid(cfg, pose)
    u, v, unit, _ = grid
    region = inner_region(cfg, pose, grid)
    img = np.empty(u.shape + (3,))
    img[region] = _render_inner(inner, u[region], v[region], unit, pose.yaw)
    img[~region] = _render_outer(outer, u[~region], v[~region], unit, nuis)
    rng = np.random.default_rng(nuis.noise_seed)
    noise = _noise_window(img.shape, rng) * np.float32(cfg.sensor_noise)
    if seam_noise > 0:
        cv, a, b = INNER_REGION
        r = np.sqrt(((u - 0.3 * pose.yaw) / a) ** 2 + ((v - cv) / b) ** 2)
        band = region & (r > 0.85)
        noise += _noise_window(img.shape, rng) * np.float32(seam_noise) * band[..., None]
    img = img * nuis.light + noise
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return pixels, to_raw(face_landmarks(inner, outer, pose.yaw), cfg, pose)


# ---------------------------------------------------------------- corpus

def _video_draw(cfg: SynthFaceConfig, rng) -> tuple[Pose, Nuisance]:
    j = cfg.pose_jitter
    pose = Pose(
        rotation=math.radians(cfg.max_rotation_deg) * j * rng.uniform(-1, 1),
        tx=cfg.max_translation_px * j * rng.uniform(-1, 1),
        ty=cfg.max_translation_px * j * rng.uniform(-1, 1),
        scale=1.0 + 0.05 * j * rng.uniform(-1, 1),
        yaw=cfg.max_yaw * j * rng.uniform(-1, 1),
    )
    nuis = Nuisance(background=tuple(rng.uniform(60, 190, 3)), light=float(rng.uniform(0.9, 1.1)))
    return pose, nuis


def _frame_draw(cfg: SynthFaceConfig, base: Pose, rng) -> Pose:
    j = cfg.pose_jitter
    return Pose(
        rotation=float(np.clip(base.rotation + math.radians(2.0) * j * rng.uniform(-1, 1),
                               -math.radians(cfg.max_rotation_deg), math.radians(cfg.max_rotation_deg))),
        tx=float(np.clip(base.tx + j * rng.uniform(-1, 1), -cfg.max_translation_px, cfg.max_translation_px)),
        ty=float(np.clip(base.ty + j * rng.uniform(-1, 1), -cfg.max_translation_px, cfg.max_translation_px)),
        scale=base.scale,
        yaw=float(np.clip(base.yaw + 0.03 * j * rng.uniform(-1, 1), -cfg.max_yaw, cfg.max_yaw)),
    )


def _split_for_videos(cfg: SynthFaceConfig, video_ids: list[str]) -> dict[str, str]:
    """Hash-ordered 70/10/20 split of one identity's videos."""
    n = len(video_ids)
    ranked = sorted(video_ids, key=lambda vid: hashlib.sha256(f"{cfg.rng_seed}:{vid}".encode()).hexdigest())
    n_test = max(1, round(0.2 * n)) if n >= 2 else 0
    n_val = max(1, round(0.1 * n)) if n >= 3 else 0
    out = {}
    for k, vid in enumerate(ranked):
        out[vid] = "test" if k < n_test else "val" if k < n_test + n_val else "train"
    return out


@dataclass(frozen=True)
class FramePlan:
    frame_id: str
    identity: int
    video_id: str
    frame_index: int
    split: str
    pose: Pose
    nuisance: Nuisance
    source_identity: int  # outer-face owner; differs from identity for fakes

    @property
    def is_fake(self) -> bool:
        return self.source_identity != self.identity


def plan_corpus(cfg: SynthFaceConfig) -> list[FramePlan]:
    """Deterministic list of every frame to render, real then fake."""
    real: list[FramePlan] = []
    for i in range(cfg.n_identities):
        rng = np.random.default_rng([cfg.rng_seed, 1, i])
        vids = [f"id{i:04d}_v{v:02d}" for v in range(cfg.videos_per_identity)]
        splits = _split_for_videos(cfg, vids)
        remaining = cfg.images_per_identity
        for vid in vids:
            base, nuis = _video_draw(cfg, rng)
            for f in range(min(cfg.frames_per_video, remaining)):
                pose = _frame_draw(cfg, base, rng)
                noise_seed = int(rng.integers(2**31))
                real.append(FramePlan(f"{vid}_f{f:02d}", i, vid, f, splits[vid], pose,
                                      Nuisance(nuis.background, nuis.light, noise_seed), i))
            remaining -= cfg.frames_per_video
    fakes: list[FramePlan] = []
    by_video: dict[str, list[FramePlan]] = {}
    for fp in real:
        by_video.setdefault(fp.video_id, []).append(fp)
    for i in range(cfg.n_identities):
        rng = np.random.default_rng([cfg.rng_seed, 2, i])
        own = [vid for vid, frames in by_video.items()
               if frames[0].identity == i and frames[0].split in ("val", "test")]
        others = np.delete(np.arange(cfg.n_identities), i)
        sources = rng.choice(others, size=len(own), replace=len(own) > len(others))
        for vid, source in zip(own, sources):
            split = by_video[vid][0].split
            source = int(source)
            src_videos = [v for v, fr in by_video.items() if fr[0].identity == source and fr[0].split == split]
            src_vid = src_videos[int(rng.integers(len(src_videos)))]
            fake_vid = f"fake_{src_vid}_as_{vid}"
            for fp in by_video[src_vid]:
                fakes.append(FramePlan(f"{fake_vid}_f{fp.frame_index:02d}", i, fake_vid, fp.frame_index,
                                       split, fp.pose, fp.nuisance, source))
    return real + fakes


def render_plan(cfg: SynthFaceConfig, fp: FramePlan):
    inner, _ = split_code(identity_code(cfg, fp.identity))
    _, outer = split_code(identity_code(cfg, fp.source_identity))
    seam = 25.0 * (1.0 - cfg.fake_fidelity) if fp.is_fake else 0.0
    return render_face(cfg, inner, outer, fp.pose, fp.nuisance, seam_noise=seam)


def generate_synthetic_corpus(cfg: SynthFaceConfig, out_dir) -> Manifest:
    """Render every planned frame to ``out_dir`` and write ``manifest.jsonl`` there."""
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "landmarks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create corpus directory {out}: {exc}") from exc
    entries = []
    for fp in plan_corpus(cfg):
        pixels, landmarks = render_plan(cfg, fp)
        img_rel = f"images/{fp.frame_id}.png"
        lm_rel = f"landmarks/{fp.frame_id}.txt"
        try:
            Image.fromarray(pixels).save(out / img_rel, compress_level=1)
            LandmarkSet(landmarks).save(out / lm_rel)
        except OSError as exc:
            raise IoFailure(f"cannot write frame {fp.frame_id}: {exc}") from exc
        role = "suspect" if fp.split != "train" else "reference_candidate"
        entries.append(ManifestEntry(
            frame_id=fp.frame_id, image_path=img_rel, landmarks_path=lm_rel,
            identity=f"id{fp.identity:04d}", label="fake" if fp.is_fake else "real",
            method="synth-swap" if fp.is_fake else None, video_id=fp.video_id,
            frame_index=fp.frame_index, split=fp.split, role=role))
    manifest = Manifest(entries, out)
    manifest.check_fake_free_training()
    manifest.check_reference_exclusion()
    manifest.save(out / "manifest.jsonl")
    log.info("wrote %d frames to %s", len(entries), out)
    return manifest
