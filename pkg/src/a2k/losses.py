"""Training objectives over a pluggable multi-layer feature extractor.

Feature lists are ordered layer 1..5 (ReLU_1_1 .. ReLU_5_1). The global
style term looks at layers 1..4, the two attention matching terms at
layers 2..5. All norms are Frobenius norms over the whole layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import tensorio
from .attention import DEFAULT_HEADS, LAYER_PATCH_EDGES, A2KConfig, a2k_forward
from .errors import ValidationError
from .stats import ada_a2k_forward

VGG_CHANNELS = (64, 128, 256, 512, 512)
VGG_FACTORS = (1, 2, 4, 8, 16)
NUM_LAYERS = 5


class FeatureExtractor(Protocol):
    """Maps a (B, C_in, H, W) input to five feature maps, shallowest first."""

    channels: tuple[int, ...]
    factors: tuple[int, ...]

    def __call__(self, x: np.ndarray) -> list[np.ndarray]: ...


class SyntheticExtractor:
    """Deterministic stand-in for a pretrained encoder.

    Each layer average-pools the previous output down to its declared
    downsampling factor, applies a fixed random 1x1 projection and a ReLU.
    Shapes follow the usual VGG-19 contract unless overridden.
    """

    def __init__(self, in_channels: int = 3, channels=VGG_CHANNELS, factors=VGG_FACTORS, seed: int = 0):
        if len(channels) != len(factors):
            raise ValidationError("channels and factors must have the same length")
        if factors[0] < 1 or any(b % a for a, b in zip(factors, factors[1:])):
            raise ValidationError(f"each factor must divide the next, got {factors}")
        self.in_channels = in_channels
        self.channels = tuple(channels)
        self.factors = tuple(factors)
        rng = np.random.default_rng(seed)
        self._weights = []
        prev = in_channels
        for c in self.channels:
            self._weights.append(rng.standard_normal((c, prev)) / math.sqrt(prev))
            prev = c

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValidationError(f"expected (B, {self.in_channels}, H, W) input, got {x.shape}")
        if x.shape[2] % self.factors[-1] or x.shape[3] % self.factors[-1]:
            raise ValidationError(f"input size {x.shape[2:]} must be divisible by {self.factors[-1]}")
        feats = []
        prev_factor = 1
        for w, factor in zip(self._weights, self.factors):
            pool = factor // prev_factor
            if pool > 1:
                b, c, h, wd = x.shape
                x = x.reshape(b, c, h // pool, pool, wd // pool, pool).mean(axis=(3, 5))
            x = np.maximum(np.einsum("oc,bchw->bohw", w, x), 0.0)
            feats.append(x.astype(np.float32))
            prev_factor = factor
        return feats


@dataclass(frozen=True)
class LossWeights:
    global_style: float = 10.0
    a2k: float = 0.5
    ada_a2k: float = 1.5

    def __post_init__(self):
        for name in ("global_style", "a2k", "ada_a2k"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ValidationError(f"loss weight {name} must be finite and >= 0, got {val}")


def _check_layers(name, feats, needed):
    if len(feats) < needed:
        raise ValidationError(f"{name} has {len(feats)} layers, need at least {needed}")


def _channel_stats(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValidationError(f"feature maps must be (B, C, H, W), got rank {x.ndim}")
    mean = x.mean(axis=(2, 3))
    std = np.sqrt(((x - mean[:, :, None, None]) ** 2).mean(axis=(2, 3)))
    return mean, std


def global_style_loss(stylized_feats: Sequence[np.ndarray], style_feats: Sequence[np.ndarray]) -> float:
    """Sum over layers 1..4 of ||mean_a - mean_b|| + ||std_a - std_b|| (per-channel spatial statistics)."""
    _check_layers("stylized features", stylized_feats, 4)
    _check_layers("style features", style_feats, 4)
    total = 0.0
    for layer, (a, b) in enumerate(zip(stylized_feats[:4], style_feats[:4]), start=1):
        a = np.asarray(a)
        b = np.asarray(b)
        if a.shape[:2] != b.shape[:2]:
            raise ValidationError(f"layer {layer}: batch/channels differ, {a.shape[:2]} vs {b.shape[:2]}")
        ma, sa = _channel_stats(a)
        mb, sb = _channel_stats(b)
        total += float(np.linalg.norm(ma - mb)) + float(np.linalg.norm(sa - sb))
    return total


def matching_configs(
    content_feats: Sequence[np.ndarray],
    patch_edges: Sequence[int] = LAYER_PATCH_EDGES,
    heads: int = DEFAULT_HEADS,
) -> list[A2KConfig]:
    """Non-parametric configs for layers 2..5, channel counts taken from the features."""
    _check_layers("content features", content_feats, NUM_LAYERS)
    if len(patch_edges) != 4:
        raise ValidationError(f"need 4 patch edges for layers 2..5, got {len(patch_edges)}")
    return [
        A2KConfig(channels=np.shape(f)[1], patch_edge=p, heads=heads, parametric=False)
        for f, p in zip(content_feats[1:NUM_LAYERS], patch_edges)
    ]


def _matching_loss(transfer, stylized_feats, content_feats, style_feats, configs):
    for name, feats in (("stylized", stylized_feats), ("content", content_feats), ("style", style_feats)):
        _check_layers(f"{name} features", feats, NUM_LAYERS)
    if configs is None:
        configs = matching_configs(content_feats)
    if len(configs) != 4:
        raise ValidationError(f"need one config per layer 2..5, got {len(configs)}")
    total = 0.0
    for layer, cfg in zip(range(2, NUM_LAYERS + 1), configs):
        if cfg.parametric:
            raise ValidationError(f"layer {layer}: matching targets must use a non-parametric config")
        out = np.asarray(stylized_feats[layer - 1], dtype=np.float32)
        fc = np.asarray(content_feats[layer - 1], dtype=np.float32)
        fs = np.asarray(style_feats[layer - 1], dtype=np.float32)
        if out.shape != fc.shape:
            raise ValidationError(f"layer {layer}: stylized shape {out.shape} differs from content {fc.shape}")
        try:
            target = transfer(fc, fs, cfg)
        except ValidationError as exc:
            raise ValidationError(f"layer {layer}: {exc}") from exc
        total += float(np.linalg.norm(out.astype(np.float64) - target.astype(np.float64)))
    return total


def a2k_matching_loss(stylized_feats, content_feats, style_feats, configs: Sequence[A2KConfig] | None = None) -> float:
    """Sum over layers 2..5 of ||stylized - A2K*(content, style)||."""
    return _matching_loss(a2k_forward, stylized_feats, content_feats, style_feats, configs)


def ada_a2k_matching_loss(stylized_feats, content_feats, style_feats, configs: Sequence[A2KConfig] | None = None) -> float:
    """Sum over layers 2..5 of ||stylized - AdaA2K*(content, style)||."""
    return _matching_loss(ada_a2k_forward, stylized_feats, content_feats, style_feats, configs)


def total_loss(parts: Sequence[float], weights: LossWeights = LossWeights()) -> float:
    gs, a2k, ada = parts
    for val in parts:
        if not math.isfinite(val) or val < 0:
            raise ValidationError(f"loss components must be finite and >= 0, got {parts}")
    return weights.global_style * gs + weights.a2k * a2k + weights.ada_a2k * ada


def load_feature_dir(directory) -> list[np.ndarray]:
    """Read ``layer1.a2kt`` .. ``layer5.a2kt`` from a directory."""
    directory = Path(directory)
    return [tensorio.load(directory / f"layer{i}.a2kt") for i in range(1, NUM_LAYERS + 1)]


def save_feature_dir(directory, feats: Sequence[np.ndarray]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(feats, start=1):
        tensorio.save(directory / f"layer{i}.a2kt", f)
