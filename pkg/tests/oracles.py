"""Independent reference implementations used to check the library."""
import math

import numpy as np


# -- finite differences -------------------------------------------------------

def central_difference(fun, x, h=1e-5):
    """Numerical gradient of scalar ``fun`` at ``x`` (float64), one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = fun(x)
        flat[i] = keep - h
        down = fun(x)
        flat[i] = keep
        g[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    """Per-coordinate |a - n| / max(|a|, |n|, 1), maximized."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)))


def arcface_loss_scalar(f, labels, W, s, m):
    """Loop-by-loop evaluation of the margin softmax loss."""
    total = 0.0
    n = W.shape[1]
    for i in range(f.shape[0]):
        fi = f[i] / math.sqrt(sum(v * v for v in f[i]))
        logits = []
        for j in range(n):
            wj = W[:, j] / math.sqrt(sum(v * v for v in W[:, j]))
            c = float(sum(a * b for a, b in zip(fi, wj)))
            if j == labels[i]:
                c = min(max(c, -1 + 1e-7), 1 - 1e-7)
                logits.append(s * math.cos(math.acos(c) + m))
            else:
                logits.append(s * c)
        top = max(logits)
        z = sum(math.exp(v - top) for v in logits)
        total += -(logits[labels[i]] - top - math.log(z))
    return total / f.shape[0]


# -- ranking ------------------------------------------------------------------

def auc_pairs(is_fake, scores):
    """O(n^2) pair counting: fake above real wins 1, ties 1/2."""
    fakes = [s for s, y in zip(scores, is_fake) if y]
    reals = [s for s, y in zip(scores, is_fake) if not y]
    wins = 0.0
    for f in fakes:
        for r in reals:
            wins += 1.0 if f > r else 0.5 if f == r else 0.0
    return wins / (len(fakes) * len(reals))


# -- rasterization ------------------------------------------------------------

def nearest_point_distance(points, h, w):
    """Euclidean distance from each pixel center (x=c, y=r) to the closest point."""
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return np.full((h, w), np.inf)
    return np.hypot(cc[None] - pts[:, 0, None, None], rr[None] - pts[:, 1, None, None]).min(axis=0)


def disk_union(points, k, h, w):
    """Pixel (r, c) is set iff some point lies within Euclidean distance k of (x=c, y=r)."""
    return nearest_point_distance(points, h, w) <= k


def hull_vertices(points):
    """Gift wrapping; independent of the library's monotone chain."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) < 3:
        return pts
    start = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
    hull = [start]
    while True:
        cur = hull[-1]
        cand = (cur + 1) % len(pts)
        for j in range(len(pts)):
            if j == cur:
                continue
            o, a, b = pts[cur], pts[cand], pts[j]
            cross = (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
            farther = np.hypot(*(b - o)) > np.hypot(*(a - o))
            if cross < 0 or (cross == 0 and farther):
                cand = j
        if cand == start:
            break
        hull.append(cand)
        if len(hull) > len(pts):
            break
    return pts[hull]


def polygon_membership(points, h, w, eps=1e-9):
    """Even-odd ray casting over pixel centers, with points on an edge counted inside."""
    poly = hull_vertices(points)
    rr, cc = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    on_edge = np.zeros((h, w), dtype=bool)
    inside = np.zeros((h, w), dtype=bool)
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)] if n > 1 else [(poly[0], poly[0])]
    for a, b in edges:
        ex, ey = b - a
        length = max(math.hypot(ex, ey), 1e-300)
        cross = ex * (rr - a[1]) - ey * (cc - a[0])
        within = ((cc >= min(a[0], b[0]) - eps) & (cc <= max(a[0], b[0]) + eps)
                  & (rr >= min(a[1], b[1]) - eps) & (rr <= max(a[1], b[1]) + eps))
        on_edge |= (np.abs(cross) <= eps * length) & within
        if n >= 3 and a[1] != b[1]:
            straddle = (a[1] > rr) != (b[1] > rr)
            x_cross = a[0] + (rr - a[1]) * ex / ey
            inside ^= straddle & (cc < x_cross)
    return inside | on_edge


# -- convolution --------------------------------------------------------------

def conv_forward_loops(params, widths, image):
    """Scalar-loop forward pass of the strided conv stack for one ``H x W x 3`` image."""
    x = np.asarray(image, dtype=np.float64) / 127.5 - 1.0
    for i in range(len(widths)):
        wgt = np.asarray(params[f"conv{i}.weight"], dtype=np.float64)
        bias = np.asarray(params[f"conv{i}.bias"], dtype=np.float64)
        h, w, c_in = x.shape
        out = np.zeros((h // 2, w // 2, wgt.shape[3]))
        for oy in range(h // 2):
            for ox in range(w // 2):
                for co in range(wgt.shape[3]):
                    acc = bias[co]
                    for ky in range(3):
                        for kx in range(3):
                            iy, ix = 2 * oy + ky - 1, 2 * ox + kx - 1
                            if 0 <= iy < h and 0 <= ix < w:
                                for ci in range(c_in):
                                    acc += x[iy, ix, ci] * wgt[ky, kx, ci, co]
                    out[oy, ox, co] = max(acc, 0.0)
        x = out
    pooled = x.mean(axis=(0, 1))
    feat = [sum(pooled[k] * params["fc.weight"][k, j] for k in range(len(pooled))) + params["fc.bias"][j]
            for j in range(params["fc.bias"].shape[0])]
    feat = np.array(feat, dtype=np.float64)
    return feat / math.sqrt(float(feat @ feat))
