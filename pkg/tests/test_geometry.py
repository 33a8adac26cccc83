import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from outerface.errors import DegenerateLandmarks, DimMismatch, EmptySubset, OutOfBounds
from outerface.geometry import (
    ALL_POINTS, EYE_REGION, INNER_FACE, LEFT_EYE, RIGHT_EYE, CropSpec, FaceImage, LandmarkSet, MaskSpec,
    MaskType, align_and_crop, apply_mask, build_mask, convex_hull, invert_affine, landmark_distance,
    parse_index_ranges, similarity_matrix,
)

from conftest import canonical_landmarks


def eyes_at(left, right, base=None):
    """Landmarks whose eye-center means are exactly ``left`` (points 37-42) and ``right`` (43-48)."""
    pts = np.array(base if base is not None else canonical_landmarks(), dtype=float)
    for idx, c in ((RIGHT_EYE, left), (LEFT_EYE, right)):
        sub = pts[list(idx)]
        pts[list(idx)] = sub - sub.mean(axis=0) + np.asarray(c, dtype=float)
    return LandmarkSet(pts)


# -- disk / polygon oracles -------------------------------------------------

def disk_oracle(points, k, h, w):
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            out[r, c] = any((c - x) ** 2 + (r - y) ** 2 <= k * k for x, y in points)
    return out


def on_segment(px, py, ax, ay, bx, by, eps=1e-9):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > eps * max(1.0, math.hypot(bx - ax, by - ay)):
        return False
    return min(ax, bx) - eps <= px <= max(ax, bx) + eps and min(ay, by) - eps <= py <= max(ay, by) + eps


def polygon_oracle(points, h, w):
    """Ray casting against the hull polygon, with boundary points counted inside."""
    hull = convex_hull(points)
    n = len(hull)
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            px, py = float(c), float(r)
            if n == 1:
                out[r, c] = abs(px - hull[0, 0]) < 1e-9 and abs(py - hull[0, 1]) < 1e-9
                continue
            edges = [(hull[i], hull[(i + 1) % n]) for i in range(n)] if n > 2 else [(hull[0], hull[1])]
            if any(on_segment(px, py, a[0], a[1], b[0], b[1]) for a, b in edges):
                out[r, c] = True
                continue
            if n < 3:
                continue
            inside = False
            for a, b in edges:
                if (a[1] > py) != (b[1] > py):
                    x_cross = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                    if px < x_cross:
                        inside = not inside
            out[r, c] = inside
    return out


# -- landmarks ----------------------------------------------------------------

def test_parse_index_ranges_is_one_based():
    assert parse_index_ranges("18-68") == INNER_FACE
    assert parse_index_ranges("37-48") == EYE_REGION
    assert parse_index_ranges("1-68") == ALL_POINTS
    assert len(parse_index_ranges("18-68")) == 51
    with pytest.raises(ValueError):
        parse_index_ranges("0-5")


def test_landmark_set_rejects_bad_shapes():
    with pytest.raises(ValueError):
        LandmarkSet(np.zeros((67, 2)))
    pts = np.zeros((68, 2))
    pts[3, 1] = np.nan
    with pytest.raises(ValueError):
        LandmarkSet(pts)


def test_landmark_file_round_trip(tmp_path, face_points):
    lm = LandmarkSet(face_points)
    lm.save(tmp_path / "a.txt")
    text = (tmp_path / "a.txt").read_text()
    assert len(text.splitlines()) == 68 and "," in text.splitlines()[0]
    assert LandmarkSet.load(tmp_path / "a.txt") == lm


def test_landmark_distance_examples(face_points):
    a = LandmarkSet(face_points)
    b = LandmarkSet(face_points + np.array([3.0, 4.0]))
    assert landmark_distance(a, a) == 0.0
    assert landmark_distance(a, b) == pytest.approx(5 * math.sqrt(68), abs=1e-9)
    assert landmark_distance(a, b) == landmark_distance(b, a)


# -- alignment ----------------------------------------------------------------

def test_default_crop_ratio_gives_30_24_px():
    assert CropSpec().eye_distance_px == pytest.approx(30.24)
    lm = eyes_at((40, 60), (80, 60))
    _, out = align_and_crop(np.zeros((200, 200, 3)), lm, CropSpec(0.27, 112))
    left, right = out.eye_centers()
    assert np.linalg.norm(right - left) == pytest.approx(30.24, abs=0.5)


def test_similarity_matrix_matches_composed_elementary_transforms():
    lm = eyes_at((40, 60), (80, 60))
    m = similarity_matrix(lm, CropSpec(0.27, 112))
    scale = 30.24 / 40.0
    assert scale == pytest.approx(0.756)
    # translate eye midpoint to origin, rotate by 0, scale, translate to (56, 50.4)
    t1 = np.array([[1, 0, -60.0], [0, 1, -60.0], [0, 0, 1]])
    rot = np.eye(3)
    sc = np.diag([scale, scale, 1.0])
    t2 = np.array([[1, 0, 56.0], [0, 1, 0.45 * 112], [0, 0, 1]])
    composed = (t2 @ sc @ rot @ t1)[:2]
    assert np.allclose(m, composed, atol=1e-9)


def test_rotated_eyes_become_horizontal():
    ang = math.radians(25)
    c = np.array([90.0, 110.0])
    d = 20 * np.array([math.cos(ang), math.sin(ang)])
    lm = eyes_at(c - d, c + d)
    _, out = align_and_crop(np.zeros((220, 220, 3)), lm, CropSpec())
    left, right = out.eye_centers()
    tilt = math.degrees(math.atan2(right[1] - left[1], right[0] - left[0]))
    assert abs(tilt) < 0.5
    mid = (left + right) / 2
    assert mid == pytest.approx([56.0, 50.4], abs=1e-9)


def test_canonical_input_crops_to_itself():
    spec = CropSpec()
    size = spec.output_size
    rng = np.random.default_rng(3)
    img = rng.uniform(0, 255, (size, size, 3))
    half = spec.eye_distance_px / 2
    mx, my = spec.eye_midpoint
    lm = eyes_at((mx - half, my), (mx + half, my), base=canonical_landmarks() * 0.3)
    face, out = align_and_crop(img, lm, spec)
    assert np.array_equal(face.pixels, img)
    assert np.allclose(out.points, lm.points, atol=1e-9)


@given(st.floats(-math.pi, math.pi), st.floats(15, 80), st.floats(40, 160), st.floats(40, 160))
def test_crop_round_trip_recovers_landmarks(angle, dist, cx, cy):
    c = np.array([cx, cy])
    d = dist / 2 * np.array([math.cos(angle), math.sin(angle)])
    lm = eyes_at(c - d, c + d)
    m = similarity_matrix(lm, CropSpec())
    back = lm.transformed(m).transformed(invert_affine(m))
    assert np.max(np.abs(back.points - lm.points)) <= 1e-6


def test_coincident_eyes_are_degenerate():
    lm = eyes_at((50, 50), (50, 50))
    with pytest.raises(DegenerateLandmarks):
        align_and_crop(np.zeros((300, 300, 3)), lm, CropSpec())


def test_out_of_bounds_tolerance(face_points):
    img = np.zeros((200, 200, 3))
    pts = face_points.copy()
    pts[:3, 0] = -20.0  # 3 of 68 = 4.4% outside: clipped, accepted
    align_and_crop(img, LandmarkSet(pts), CropSpec())
    pts[:4, 0] = -20.0  # 5.9% outside
    with pytest.raises(OutOfBounds):
        align_and_crop(img, LandmarkSet(pts), CropSpec())


def test_samples_outside_source_are_zero():
    lm = eyes_at((3, 3), (9, 3), base=canonical_landmarks() * 0.1)  # crop reaches past the top-left corner
    face, _ = align_and_crop(np.full((30, 30, 3), 200.0), lm, CropSpec())
    assert face.pixels[0, 0, 0] == 0.0 and face.pixels.max() == pytest.approx(200.0)


def test_crop_spec_validation():
    for bad in ((0.0, 112), (0.5, 112), (0.27, 8)):
        with pytest.raises(ValueError):
            CropSpec(*bad)


# -- masks --------------------------------------------------------------------

def test_mask_subsets_follow_the_68_point_legend():
    assert MaskSpec(MaskType.INNER).landmark_subset == tuple(range(17, 68))
    assert len(MaskSpec(MaskType.INNER).landmark_subset) == 51
    assert MaskSpec(MaskType.EYE).landmark_subset == tuple(range(36, 48))
    assert MaskSpec(MaskType.HULL).landmark_subset == tuple(range(17, 68))
    assert MaskSpec(MaskType.UNITE).landmark_subset == tuple(range(68))


def test_no_mask_is_all_false(face_points):
    m = build_mask(MaskSpec(MaskType.NONE), LandmarkSet(face_points), (112, 112))
    assert m.shape == (112, 112) and not m.any()


def test_single_disk_matches_brute_force_count():
    pts = np.zeros((68, 2))
    pts[:] = (56.0, 56.0)
    m = build_mask(MaskSpec(MaskType.UNITE, 13), LandmarkSet(pts), (112, 112))
    brute = sum((c - 56) ** 2 + (r - 56) ** 2 <= 169 for r in range(112) for c in range(112))
    assert m.sum() == brute == 529


def test_eye_mask_on_rectangle_counts_boundary_pixels():
    pts = canonical_landmarks()
    corners = [(20, 30), (30, 30), (30, 34), (20, 34)]
    for i, idx in enumerate(EYE_REGION):
        pts[idx] = corners[i % 4]
    m = build_mask(MaskSpec(MaskType.EYE), LandmarkSet(pts), (64, 64))
    assert m.sum() == 11 * 5
    assert m[30:35, 20:31].all()


def test_hull_mask_needs_three_points(face_points):
    spec = MaskSpec(MaskType.HULL, landmark_subset=(17, 18))
    with pytest.raises(EmptySubset):
        build_mask(spec, LandmarkSet(face_points), (112, 112))


def test_radius_limit(face_points):
    with pytest.raises(ValueError):
        build_mask(MaskSpec(MaskType.INNER, 57), LandmarkSet(face_points), (112, 112))


def _random_crop_landmarks(rng, size=32):
    return LandmarkSet(rng.uniform(-2, size + 1, (68, 2)))


@pytest.mark.parametrize("mask_type", list(MaskType))
@pytest.mark.parametrize("k", [1, 5, 13])
def test_masks_match_oracles_on_random_grids(mask_type, k):
    rng = np.random.default_rng(hash((mask_type.value, k)) % 2**32)
    for _ in range(4):
        lm = _random_crop_landmarks(rng)
        spec = MaskSpec(mask_type, k)
        got = build_mask(spec, lm, (32, 32))
        pts = lm.points[list(spec.landmark_subset)]
        if mask_type is MaskType.NONE:
            want = np.zeros((32, 32), dtype=bool)
        elif mask_type.is_hull:
            want = polygon_oracle(pts, 32, 32)
        else:
            want = disk_oracle(pts, k, 32, 32)
        assert np.array_equal(got, want)


@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_pointwise_masks_grow_with_radius(seed, k):
    lm = LandmarkSet(np.random.default_rng(seed).uniform(0, 63, (68, 2)))
    for t in (MaskType.INNER, MaskType.UNITE):
        small = build_mask(MaskSpec(t, k), lm, (64, 64))
        big = build_mask(MaskSpec(t, k + 1), lm, (64, 64))
        assert not (small & ~big).any()


def _depth_inside(hull, x, y):
    """Signed distance to the nearest edge of a CCW hull; positive inside."""
    d = []
    for i in range(len(hull)):
        (ax, ay), (bx, by) = hull[i], hull[(i + 1) % len(hull)]
        d.append(((bx - ax) * (y - ay) - (by - ay) * (x - ax)) / math.hypot(bx - ax, by - ay))
    return min(d)


@given(st.integers(0, 2**32 - 1))
def test_hull_masks_nearest_pixel_of_interior_landmarks(seed):
    lm = LandmarkSet(np.random.default_rng(seed).uniform(2, 60, (68, 2)))
    for t in (MaskType.EYE, MaskType.HULL):
        m = build_mask(MaskSpec(t), lm, (64, 64))
        pts = lm.points[list(t.subset)]
        hull = convex_hull(pts)
        for x, y in pts:
            # the nearest pixel center is within sqrt(2)/2 of the landmark
            if _depth_inside(hull, x, y) >= math.sqrt(0.5):
                assert m[int(round(y)), int(round(x))]
        for x, y in hull:
            assert m[int(round(y)), int(round(x))] == (_depth_inside(hull, round(x), round(y)) >= -1e-9)


# -- apply_mask ---------------------------------------------------------------

def test_apply_mask_examples():
    img = FaceImage(np.full((8, 8, 3), 128.0))
    none = np.zeros((8, 8), dtype=bool)
    assert np.array_equal(apply_mask(img, none).pixels, img.pixels)
    assert not apply_mask(img, ~none).pixels.any()
    half = np.zeros((8, 8), dtype=bool)
    half[:4] = True
    assert apply_mask(img, half).pixels.mean() == 64.0


def test_apply_mask_dim_mismatch():
    with pytest.raises(DimMismatch):
        apply_mask(FaceImage(np.zeros((8, 8, 3))), np.zeros((8, 9), dtype=bool))


@given(st.integers(0, 2**32 - 1))
def test_apply_mask_is_idempotent_and_leaves_unmasked_bits(seed):
    rng = np.random.default_rng(seed)
    img = FaceImage(rng.uniform(0, 255, (16, 16, 3)))
    mask = rng.random((16, 16)) < 0.4
    once = apply_mask(img, mask)
    assert np.array_equal(apply_mask(once, mask).pixels, once.pixels)
    assert np.array_equal(once.pixels[~mask], img.pixels[~mask])
