"""All-to-key attention: distributed attention, progressive attention and
the feature transformation that fuses them.

Tensor roles (see :mod:`a2k.blocking` for the layout)::

    q, k, v           (B, heads, C/heads, n, r) blocked tensors
    DA scores         (B, heads, r, n_q, n_k)   one softmax per query offset
    PA step-2 scores  (B, heads, n, r, r)       one softmax per aligned patch pair
    index map         (B, heads, n)             best-matching key patch per query patch

Distributed attention (DA) lets the query at within-patch offset ``o`` of
patch ``x`` attend to the key at offset ``o`` of every patch, i.e. dilated
attention with stride ``p``. Progressive attention (PA) first picks, for
every query patch, the single most similar key patch (step 1), gathers
that patch's keys and values into place, then attends densely inside the
aligned pair (step 2).

Large score tensors are built in chunks of query patches so peak memory
stays bounded; chunking does not change any result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import tensorio
from .blocking import block, check_blockable, unblock
from .errors import ConfigError, DimensionError, FormatError, ValidationError
from .tensor import (
    ChannelProjection,
    Pattern,
    argmax_last_axis,
    contract,
    instance_norm,
    project_channels,
    softmax_last_axis,
)

PROJECTION_NAMES = ("dq", "dk", "dv", "pq", "pk", "pv", "fus_d", "fus_p")

# patch edge per VGG layer ReLU_2_1 .. ReLU_5_1
LAYER_PATCH_EDGES = (16, 8, 8, 4)
DEFAULT_HEADS = 8

MAX_CHUNK_ELEMENTS = 1 << 22

MANIFEST_NAME = "config.json"


def _random_projections(channels: int, seed: int) -> dict[str, ChannelProjection]:
    rng = np.random.default_rng(seed)
    return {name: ChannelProjection.random(channels, channels, rng) for name in PROJECTION_NAMES}


@dataclass(frozen=True)
class A2KConfig:
    """Immutable settings for one all-to-key attention layer.

    When ``parametric`` is false all eight projections are identities
    without bias. Otherwise missing projections are drawn from ``seed``
    (uniform in +-1/sqrt(C), each weight followed by its bias, in
    :data:`PROJECTION_NAMES` order).

    ``values_from`` selects where the value path reads from: ``"style"``
    (default) or ``"content"`` for studying the alternative reading.
    """

    channels: int
    patch_edge: int = 8
    heads: int = DEFAULT_HEADS
    enable_da: bool = True
    enable_pa: bool = True
    enable_pa_step1: bool = True
    parametric: bool = True
    seed: int = 0
    values_from: str = "style"
    projections: Mapping[str, ChannelProjection] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"channels must be positive, got {self.channels}")
        if self.patch_edge < 1:
            raise ConfigError(f"patch edge must be positive, got {self.patch_edge}")
        if self.heads < 1 or self.channels % self.heads:
            raise ConfigError(f"heads={self.heads} must divide channels={self.channels}")
        if not (self.enable_da or self.enable_pa):
            raise ConfigError("at least one of distributed or progressive attention must be enabled")
        if self.values_from not in ("style", "content"):
            raise ConfigError(f"values_from must be 'style' or 'content', got {self.values_from!r}")

        if not self.parametric:
            projections = {name: ChannelProjection.identity(self.channels) for name in PROJECTION_NAMES}
        elif self.projections is None:
            projections = _random_projections(self.channels, self.seed)
        else:
            projections = dict(self.projections)
            missing = set(PROJECTION_NAMES) - set(projections)
            if missing:
                raise ConfigError(f"missing projections: {sorted(missing)}")
            for name, proj in projections.items():
                if proj.weight.shape != (self.channels, self.channels):
                    raise ConfigError(
                        f"projection {name} has shape {proj.weight.shape}, expected {(self.channels, self.channels)}"
                    )
        object.__setattr__(self, "projections", MappingProxyType(projections))

    def validate_maps(self, content: np.ndarray, style: np.ndarray) -> None:
        """Check that a content/style pair can run under this configuration."""
        for name, x in (("content", content), ("style", style)):
            if x.ndim != 4:
                raise ValidationError(f"{name} must be (B, C, H, W), got rank {x.ndim}")
            if x.shape[1] != self.channels:
                raise ValidationError(f"{name} has {x.shape[1]} channels, config expects {self.channels}")
            check_blockable(x.shape, self.patch_edge, self.heads)
        if content.shape[0] != style.shape[0]:
            raise ValidationError(f"batch sizes differ: content {content.shape[0]}, style {style.shape[0]}")
        if self.enable_pa and content.shape[2:] != style.shape[2:]:
            raise ValidationError(
                f"progressive attention needs equal content/style grids, got {content.shape[2:]} vs {style.shape[2:]}"
            )
        if self.values_from == "content" and content.shape[2:] != style.shape[2:]:
            raise ValidationError("values_from='content' needs equal content/style sizes")

    def manifest(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "projections"
        }


def save_config(cfg: A2KConfig, directory) -> None:
    """Write ``config.json`` and, for parametric configs, one A2KT file per projection.

    Each projection is stored as a (C, C + 1) matrix: the weight with the
    bias appended as the last column.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MANIFEST_NAME).write_text(json.dumps(cfg.manifest(), indent=2, sort_keys=True) + "\n")
    if cfg.parametric:
        for name, proj in cfg.projections.items():
            packed = np.concatenate([proj.weight, proj.bias[:, None]], axis=1)
            tensorio.save(directory / f"{name}.a2kt", packed)


def load_config(directory, **overrides) -> A2KConfig:
    """Read a config directory written by :func:`save_config`.

    Projection files that are present override the seeded defaults; if none
    are present the projections are regenerated from the manifest's seed.
    Keyword ``overrides`` replace manifest entries (e.g. mode flags).
    """
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {directory / MANIFEST_NAME}: {exc}") from exc
    known = {f.name for f in fields(A2KConfig)} - {"projections"}
    unknown = set(manifest) - known
    if unknown:
        raise FormatError(f"unknown manifest keys: {sorted(unknown)}")
    if "channels" not in manifest:
        raise FormatError("manifest is missing 'channels'")
    manifest.update(overrides)

    files = {name: directory / f"{name}.a2kt" for name in PROJECTION_NAMES}
    present = {name: path for name, path in files.items() if path.exists()}
    projections = None
    if present and manifest.get("parametric", True):
        if len(present) != len(files):
            raise FormatError(f"incomplete projection set, missing {sorted(set(files) - set(present))}")
        projections = {}
        for name, path in present.items():
            packed = tensorio.load(path)
            if packed.ndim != 2 or packed.shape[1] != packed.shape[0] + 1:
                raise FormatError(f"{path.name}: expected a (C, C + 1) matrix, got {packed.shape}")
            projections[name] = ChannelProjection(packed[:, :-1], packed[:, -1])
    return A2KConfig(projections=projections, **manifest)


def _chunk(per_item: int, limit: int) -> int:
    return max(1, limit // max(per_item, 1))


def _distributed(q, k, v, keep_scores: bool, max_chunk: int = MAX_CHUNK_ELEMENTS):
    q = np.asarray(q, dtype=np.float32)
    k = np.asarray(k, dtype=np.float32)
    v = np.asarray(v, dtype=np.float32)
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.ndim != 5:
            raise DimensionError(f"{name} must be a rank-5 blocked tensor, got rank {t.ndim}")
    if k.shape[:2] != v.shape[:2] or k.shape[3:] != v.shape[3:]:
        raise DimensionError(f"k {k.shape} and v {v.shape} must share batch, heads, n and r")
    b, h, _, nq, r = q.shape
    nk = k.shape[3]
    cv = v.shape[2]
    out = np.empty((b, h, cv, nq, r), dtype=np.float32)
    scores = np.empty((b, h, r, nq, nk), dtype=np.float32) if keep_scores else None
    step = _chunk(b * h * r * nk, max_chunk)
    for x0 in range(0, nq, step):
        x1 = min(nq, x0 + step)
        logits = contract(q[:, :, :, x0:x1], k, Pattern.DA_SCORES)
        s = softmax_last_axis(logits)
        out[:, :, :, x0:x1] = contract(s, v, Pattern.DA_VALUES)
        if keep_scores:
            scores[:, :, :, x0:x1] = s
    return out, scores


def distributed_attention(q, k, v, max_chunk: int = MAX_CHUNK_ELEMENTS):
    """Dilated attention across patches at matching within-patch offsets.

    Returns ``(out, scores)`` with ``out`` shaped like ``q`` (channel count
    taken from ``v``) and ``scores`` of shape (B, heads, r, n_q, n_k).
    """
    return _distributed(q, k, v, keep_scores=True, max_chunk=max_chunk)


def progressive_step1(q, k) -> np.ndarray:
    """Index of the most similar key patch for every query patch.

    Similarity is the full patch dot product (summed over head-channels
    and within-patch offsets). Ties resolve to the lowest patch index.
    """
    q = np.asarray(q, dtype=np.float32)
    k = np.asarray(k, dtype=np.float32)
    logits = contract(q, k, Pattern.PA1_SCORES)
    return argmax_last_axis(logits)


def reshuffle(t, idx) -> np.ndarray:
    """Gather patches: ``out[b, h, :, x] = t[b, h, :, idx[b, h, x]]``."""
    t = np.asarray(t)
    idx = np.asarray(idx)
    if t.ndim != 5 or idx.ndim != 3:
        raise DimensionError(f"expected (B, h, c, n, r) and (B, h, n'), got ranks {t.ndim} and {idx.ndim}")
    if idx.shape[:2] != t.shape[:2]:
        raise DimensionError(f"index map batch/head axes {idx.shape[:2]} differ from tensor {t.shape[:2]}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValidationError(f"index map must be integer, got {idx.dtype}")
    n = t.shape[3]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError(f"index map values must lie in [0, {n})")
    return np.ascontiguousarray(np.take_along_axis(t, idx[:, :, None, :, None], axis=3))


def _progressive2(q, ks, vs, keep_scores: bool, max_chunk: int = MAX_CHUNK_ELEMENTS):
    q = np.asarray(q, dtype=np.float32)
    ks = np.asarray(ks, dtype=np.float32)
    vs = np.asarray(vs, dtype=np.float32)
    for name, t in (("q", q), ("k", ks), ("v", vs)):
        if t.ndim != 5:
            raise DimensionError(f"{name} must be a rank-5 blocked tensor, got rank {t.ndim}")
    if ks.shape[:2] != vs.shape[:2] or ks.shape[3:] != vs.shape[3:]:
        raise DimensionError(f"k {ks.shape} and v {vs.shape} must share batch, heads, n and r")
    b, h, _, n, r = q.shape
    cv = vs.shape[2]
    if ks.shape[3] != n:
        raise DimensionError(f"axis 'x' has size {n} in q but {ks.shape[3]} in the reshuffled keys")
    out = np.empty((b, h, cv, n, r), dtype=np.float32)
    scores = np.empty((b, h, n, r, r), dtype=np.float32) if keep_scores else None
    step = _chunk(b * h * r * r, max_chunk)
    for x0 in range(0, n, step):
        x1 = min(n, x0 + step)
        logits = contract(q[:, :, :, x0:x1], ks[:, :, :, x0:x1], Pattern.PA2_SCORES)
        s = softmax_last_axis(logits)
        out[:, :, :, x0:x1] = contract(s, vs[:, :, :, x0:x1], Pattern.PA2_VALUES)
        if keep_scores:
            scores[:, :, x0:x1] = s
    return out, scores


def progressive_step2(q, k_shuffled, v_shuffled, max_chunk: int = MAX_CHUNK_ELEMENTS):
    """Dense attention inside each aligned (query patch, matched key patch) pair.

    Returns ``(out, scores)``; scores have shape (B, heads, n, r, r).
    """
    return _progressive2(q, k_shuffled, v_shuffled, keep_scores=True, max_chunk=max_chunk)


@dataclass
class Branches:
    """Intermediate results of one forward pass, kept for inspection and moments."""

    da_scores: np.ndarray | None = None
    pa_scores: np.ndarray | None = None
    pa_index: np.ndarray | None = None
    da_out: np.ndarray | None = None
    pa_out: np.ndarray | None = None


def _blocked_inputs(content, style, cfg: A2KConfig, prefix: str):
    proj = cfg.projections
    p, heads = cfg.patch_edge, cfg.heads
    value_src = style if cfg.values_from == "style" else content
    q = block(project_channels(instance_norm(content), proj[prefix + "q"]), p, heads)
    k = block(project_channels(instance_norm(style), proj[prefix + "k"]), p, heads)
    v = block(project_channels(value_src, proj[prefix + "v"]), p, heads)
    return q, k, v


def attention_branches(content, style, cfg: A2KConfig, keep_scores: bool = False) -> Branches:
    """Run the enabled attention branches and return their blocked outputs."""
    content = np.asarray(content, dtype=np.float32)
    style = np.asarray(style, dtype=np.float32)
    cfg.validate_maps(content, style)
    res = Branches()
    if cfg.enable_da:
        q, k, v = _blocked_inputs(content, style, cfg, "d")
        res.da_out, res.da_scores = _distributed(q, k, v, keep_scores)
    if cfg.enable_pa:
        q, k, v = _blocked_inputs(content, style, cfg, "p")
        if cfg.enable_pa_step1:
            res.pa_index = progressive_step1(q, k)
            k = reshuffle(k, res.pa_index)
            v = reshuffle(v, res.pa_index)
        res.pa_out, res.pa_scores = _progressive2(q, k, v, keep_scores)
    return res


def a2k_forward(content, style, cfg: A2KConfig) -> np.ndarray:
    """Stylize ``content`` with ``style``: fused DA/PA outputs plus the content residual."""
    content = np.asarray(content, dtype=np.float32)
    res = attention_branches(content, style, cfg)
    _, _, hgt, wid = content.shape
    total = content.astype(np.float64)
    if res.da_out is not None:
        total += project_channels(unblock(res.da_out, hgt, wid), cfg.projections["fus_d"])
    if res.pa_out is not None:
        total += project_channels(unblock(res.pa_out, hgt, wid), cfg.projections["fus_p"])
    return total.astype(np.float32)


def all2all_forward(content, style, cfg: A2KConfig) -> np.ndarray:
    """The same layer with dense all-to-all attention in place of A2K.

    Uses the DA projections, one head over all channels, and single-pixel
    patches, so every query token scores against every key token.
    """
    content = np.asarray(content, dtype=np.float32)
    style = np.asarray(style, dtype=np.float32)
    if content.ndim != 4 or style.ndim != 4 or content.shape[:2] != style.shape[:2]:
        raise DimensionError(f"content {content.shape} and style {style.shape} must share batch and channels")
    if content.shape[1] != cfg.channels:
        raise ValidationError(f"content has {content.shape[1]} channels, config expects {cfg.channels}")
    proj = cfg.projections
    value_src = style if cfg.values_from == "style" else content
    q = block(project_channels(instance_norm(content), proj["dq"]), 1, 1)
    k = block(project_channels(instance_norm(style), proj["dk"]), 1, 1)
    v = block(project_channels(value_src, proj["dv"]), 1, 1)
    out, _ = _distributed(q, k, v, keep_scores=False)
    _, _, hgt, wid = content.shape
    fused = project_channels(unblock(out, hgt, wid), proj["fus_d"])
    return (fused.astype(np.float64) + content).astype(np.float32)


@dataclass(frozen=True)
class FlopCount:
    """Multiply counts of the three similarity computations, plus the dense baseline."""

    distributed: int
    progressive_step1: int
    progressive_step2: int
    all_to_all: int

    @property
    def total(self) -> int:
        return self.distributed + self.progressive_step1 + self.progressive_step2


def a2k_flops(height: int, width: int, channels: int, blocks: int) -> FlopCount:
    """Closed-form complexity with ``blocks`` blocks per side (so patches are (H/b) x (W/b)).

    distributed = b^2 HWC, step 1 = b^2 HWC, step 2 = (H/b)(W/b) HWC and the
    all-to-all baseline is (HW)^2 C. Integers are exact.
    """
    for name, val in (("height", height), ("width", width), ("channels", channels), ("blocks", blocks)):
        if int(val) != val or val < 1:
            raise ValidationError(f"{name} must be a positive integer, got {val}")
    if height % blocks or width % blocks:
        raise ValidationError(f"{blocks} blocks per side do not divide {height}x{width}")
    hwc = height * width * channels
    patch = (height // blocks) * (width // blocks)
    return FlopCount(
        distributed=blocks * blocks * hwc,
        progressive_step1=blocks * blocks * hwc,
        progressive_step2=patch * hwc,
        all_to_all=(height * width) ** 2 * channels,
    )


def blocks_per_side(size: int, patch_edge: int) -> int:
    """Translate a patch edge (pixels) into the blocks-per-side parameter of :func:`a2k_flops`."""
    if size % patch_edge:
        raise ValidationError(f"patch edge {patch_edge} does not divide {size}")
    return size // patch_edge


def layer_config(channels: int, layer: int, heads: int = DEFAULT_HEADS, **kwargs) -> A2KConfig:
    """Config for VGG layer ``layer`` (2..5) using the default per-layer patch edges."""
    if not 2 <= layer <= 5:
        raise ValidationError(f"attention layers are 2..5, got {layer}")
    return A2KConfig(channels=channels, patch_edge=LAYER_PATCH_EDGES[layer - 2], heads=heads, **kwargs)


__all__ = [
    "A2KConfig",
    "Branches",
    "FlopCount",
    "LAYER_PATCH_EDGES",
    "PROJECTION_NAMES",
    "a2k_flops",
    "a2k_forward",
    "all2all_forward",
    "attention_branches",
    "blocks_per_side",
    "distributed_attention",
    "layer_config",
    "load_config",
    "progressive_step1",
    "progressive_step2",
    "reshuffle",
    "save_config",
]
