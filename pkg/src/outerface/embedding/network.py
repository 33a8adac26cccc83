"""Plain strided convnet with hand-written backward pass.

Layout is NHWC. Each block is a 3x3 convolution (stride 2, zero padding 1)
followed by ReLU; the last block is global-average-pooled and projected to
the embedding dimension by a linear layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import NonFiniteActivation, NormalizationDegenerate

NORM_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 112
    embed_dim: int = 64
    conv_widths: tuple[int, ...] = (8, 16, 32, 64)
    n_classes: int = 2
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "conv_widths", tuple(int(c) for c in self.conv_widths))
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if not self.conv_widths:
            raise ValueError("need at least one conv block")
        if self.input_size % (2 ** len(self.conv_widths)):
            raise ValueError("input_size must be divisible by 2**len(conv_widths)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        c_in = 3
        for i, c_out in enumerate(self.conv_widths):
            shapes[f"conv{i}.weight"] = (3, 3, c_in, c_out)
            shapes[f"conv{i}.bias"] = (c_out,)
            c_in = c_out
        shapes["fc.weight"] = (c_in, self.embed_dim)
        shapes["fc.bias"] = (self.embed_dim,)
        shapes["proj.W"] = (self.embed_dim, self.n_classes)
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "embed_dim": self.embed_dim,
            "conv_widths": list(self.conv_widths),
            "n_classes": self.n_classes,
            "dtype": self.dtype,
        }


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Kaiming-uniform (fan-in) weights, zero biases, unit-norm projection columns."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in cfg.param_shapes().items():
        if name == "proj.W":
            w = rng.standard_normal(shape)
            w /= np.linalg.norm(w, axis=0, keepdims=True)
        elif name.endswith("bias"):
            w = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=shape)
        params[name] = w.astype(cfg.dtype)
    return params


def normalize_pixels(images: np.ndarray, dtype) -> np.ndarray:
    """Map 0..255 pixels to [-1, 1]."""
    return np.asarray(images, dtype=dtype) / dtype(127.5) - dtype(1.0)


def _im2col(x: np.ndarray) -> np.ndarray:
    """Rows of 3x3 stride-2 patches (zero padding 1), ordered (kh, kw, channel)."""
    b, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    xp = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    sb, sh, sw, sc = xp.strides
    patches = as_strided(xp, (b, ho, wo, 3, 3, c), (sb, 2 * sh, 2 * sw, sh, sw, sc), writeable=False)
    return patches.reshape(b * ho * wo, 9 * c)


def _conv_input_grad(g: np.ndarray, weight: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Gradient w.r.t. a conv block's input given the gradient ``g`` of its pre-activation rows."""
    b, h, w, c = shape
    ho, wo = h // 2, w // 2
    taps = weight.reshape(9, c, -1)
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=g.dtype)
    for kh in range(3):
        for kw in range(3):
            dxp[:, kh:kh + 2 * ho:2, kw:kw + 2 * wo:2, :] += (g @ taps[kh * 3 + kw].T).reshape(b, ho, wo, c)
    return dxp[:, 1:-1, 1:-1, :]


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # (cols, input_shape, relu_mask) per block
    pooled: np.ndarray = None
    last_shape: tuple = None


def forward_features(params: dict, cfg: ModelConfig, images: np.ndarray, keep_cache: bool = False):
    """Pre-normalization features ``(B, d)`` for a batch of ``B x H x W x 3`` images."""
    dtype = np.dtype(cfg.dtype).type
    x = normalize_pixels(images, dtype)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != (cfg.input_size, cfg.input_size, 3):
        raise ValueError(f"expected {cfg.input_size}x{cfg.input_size}x3 input, got {x.shape[1:]}")
    cache = ForwardCache() if keep_cache else None
    for i in range(len(cfg.conv_widths)):
        w = params[f"conv{i}.weight"]
        b, h, wd, _ = x.shape
        cols = _im2col(x)
        out = cols @ w.reshape(-1, w.shape[-1]) + params[f"conv{i}.bias"]
        active = out > 0
        np.maximum(out, 0, out=out)  # propagates NaN, caught on the features below
        x = out.reshape(b, h // 2, wd // 2, -1)
        if keep_cache:
            cache.inputs.append((cols, (b, h, wd, w.shape[2]), active.reshape(x.shape)))
    pooled = x.mean(axis=(1, 2))
    feats = pooled @ params["fc.weight"] + params["fc.bias"]
    if not np.all(np.isfinite(feats)):
        raise NonFiniteActivation("non-finite activation in forward pass")
    if keep_cache:
        cache.pooled = pooled
        cache.last_shape = x.shape
    return feats, cache


def backward_features(params: dict, cfg: ModelConfig, cache: ForwardCache, grad_feats: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every backbone parameter, given d loss / d features."""
    grads = {
        "fc.weight": cache.pooled.T @ grad_feats,
        "fc.bias": grad_feats.sum(axis=0),
    }
    b, h, w, c = cache.last_shape
    g = grad_feats @ params["fc.weight"].T / (h * w)
    g = np.broadcast_to(g[:, None, None, :], (b, h, w, c))
    for i in reversed(range(len(cfg.conv_widths))):
        cols, in_shape, active = cache.inputs[i]
        weight = params[f"conv{i}.weight"]
        g = np.multiply(g, active).reshape(-1, active.shape[-1])  # g may be a strided view
        grads[f"conv{i}.weight"] = (cols.T @ g).reshape(weight.shape)
        grads[f"conv{i}.bias"] = g.sum(axis=0)
        if i > 0:
            g = _conv_input_grad(g, weight, in_shape)
    return grads


def l2_normalize(feats: np.ndarray) -> np.ndarray:
    feats = np.asarray(feats)
    norms = np.linalg.norm(feats, axis=-1, keepdims=True)
    if np.any(norms < NORM_EPS):
        raise NormalizationDegenerate("feature norm below 1e-12; cannot normalize")
    return feats / norms


class EmbeddingModel:
    """Backbone parameters plus the class-weight projection used during training."""

    def __init__(self, config: ModelConfig, params: dict | None = None, seed: int = 0, meta: dict | None = None):
        self.config = config
        self.meta = dict(meta or {})
        self.params = params if params is not None else init_params(config, seed)
        expected = config.param_shapes()
        if list(self.params) != list(expected):
            raise ValueError("parameter names do not match the model config")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: expected {shape}, got {self.params[name].shape}")

    def features(self, images: np.ndarray) -> np.ndarray:
        return forward_features(self.params, self.config, images)[0]

    def embed(self, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
        """Unit-norm embeddings for one image (``H x W x 3``) or a batch."""
        images = np.asarray(images)
        single = images.ndim == 3
        if single:
            images = images[None]
        out = [l2_normalize(self.features(images[i:i + batch_size]).astype(np.float64))
               for i in range(0, len(images), batch_size)]
        emb = np.concatenate(out, axis=0)
        return emb[0] if single else emb

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.config, {k: v.copy() for k, v in self.params.items()}, meta=self.meta)
