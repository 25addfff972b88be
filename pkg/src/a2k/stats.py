"""Attention-weighted moment statistics (AdaA2K and the dense AdaAttN baseline).

Instead of aggregating values directly, each attention distribution is
turned into a per-position mean ``M`` and standard deviation ``S`` of the
raw style features it attends to. The stylized map is then the affine
transform ``S * norm(content) + M`` of the normalized content.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .attention import A2KConfig, attention_branches, reshuffle
from .blocking import block, unblock
from .errors import DimensionError, ValidationError
from .tensor import Pattern, contract, instance_norm, softmax_last_axis

Axis = Literal["distributed", "progressive"]


@dataclass(frozen=True)
class Moments:
    """Attention-weighted mean and standard deviation, shaped like the value tensor."""

    mean: np.ndarray
    std: np.ndarray
    # E[v^2] - M^2 before clamping; negative entries are rounding noise
    raw_variance: np.ndarray


_SUBSCRIPTS = {
    "distributed": "bhyxz,bhczy->bhcxy",
    "progressive": "bhxyz,bhcxz->bhcxy",
}


def attention_moments(scores, style_blocked, axis: Axis = "distributed") -> Moments:
    """Weighted mean and std of ``style_blocked`` under ``scores``.

    ``axis`` says how the scores are laid out: ``"distributed"`` for
    (B, h, r, n_q, n_k) scores over the un-shuffled values, ``"progressive"``
    for (B, h, n, r, r) scores over values already reshuffled into place.

    Score rows are renormalized in float64 before weighting, so a constant
    value set gives its value back exactly. Mean, mean of squares and the
    squared mean are each rounded to float32 before the subtraction, and
    the variance is clamped at zero before the square root.
    """
    if axis not in _SUBSCRIPTS:
        raise ValueError(f"axis must be 'distributed' or 'progressive', got {axis!r}")
    weights = np.asarray(scores, dtype=np.float64)
    values = np.asarray(style_blocked, dtype=np.float32)
    if weights.ndim != 5 or values.ndim != 5:
        raise DimensionError(f"expected rank-5 scores and values, got {weights.ndim} and {values.ndim}")
    key_axis = 3 if axis == "distributed" else 4
    if weights.shape[-1] != values.shape[key_axis] or weights.shape[:2] != values.shape[:2]:
        raise DimensionError(f"scores {weights.shape} do not fit values {values.shape} ({axis})")
    weights = weights / weights.sum(axis=-1, keepdims=True)
    sub = _SUBSCRIPTS[axis]
    v64 = values.astype(np.float64)
    mean = np.einsum(sub, weights, v64, optimize=True).astype(np.float32)
    mean_sq = np.einsum(sub, weights, v64 * v64, optimize=True).astype(np.float32)
    raw = mean_sq.astype(np.float64) - (mean * mean).astype(np.float64)
    std = np.sqrt(np.maximum(raw, 0.0)).astype(np.float32)
    return Moments(mean=mean, std=std, raw_variance=raw)


def ada_a2k_forward(content, style, cfg: A2KConfig) -> np.ndarray:
    """``(S_d + S_p) * norm(content) + (M_d + M_p)`` over the enabled branches.

    Scores come from the same (parametric or identity) projections as
    :func:`a2k.attention.a2k_forward`; moments are taken over the raw
    blocked style features, reshuffled for the progressive branch.
    """
    content = np.asarray(content, dtype=np.float32)
    style = np.asarray(style, dtype=np.float32)
    branches = attention_branches(content, style, cfg, keep_scores=True)
    raw = block(style, cfg.patch_edge, cfg.heads)
    _, _, hgt, wid = content.shape

    mean = np.zeros(content.shape, dtype=np.float64)
    std = np.zeros(content.shape, dtype=np.float64)
    if branches.da_scores is not None:
        m = attention_moments(branches.da_scores, raw, "distributed")
        mean += unblock(m.mean, hgt, wid)
        std += unblock(m.std, hgt, wid)
    if branches.pa_scores is not None:
        shuffled = raw if branches.pa_index is None else reshuffle(raw, branches.pa_index)
        m = attention_moments(branches.pa_scores, shuffled, "progressive")
        mean += unblock(m.mean, hgt, wid)
        std += unblock(m.std, hgt, wid)
    return (std * instance_norm(content) + mean).astype(np.float32)


def all2all_adaattn_forward(content, style) -> np.ndarray:
    """Dense AdaAttN-style transform: every content position attends to every style position.

    Queries and keys are the instance-normalized features (no projections,
    one head); moments are taken over the raw style features.
    """
    content = np.asarray(content, dtype=np.float32)
    style = np.asarray(style, dtype=np.float32)
    if content.ndim != 4 or style.ndim != 4:
        raise DimensionError("content and style must be (B, C, H, W)")
    if content.shape[:2] != style.shape[:2]:
        raise DimensionError(
            f"axis 'channel' or 'batch' differs: content {content.shape[:2]}, style {style.shape[:2]}"
        )
    _, _, hgt, wid = content.shape
    q = block(instance_norm(content), 1)
    k = block(instance_norm(style), 1)
    logits = contract(q, k, Pattern.DA_SCORES)
    scores = softmax_last_axis(logits)
    m = attention_moments(scores, block(style, 1), "distributed")
    mean = unblock(m.mean, hgt, wid).astype(np.float64)
    std = unblock(m.std, hgt, wid).astype(np.float64)
    return (std * instance_norm(content) + mean).astype(np.float32)


def check_moments(m: Moments, tol: float = 1e-4) -> None:
    """Raise if the clamped variance hid anything beyond rounding noise."""
    worst = float(-m.raw_variance.min(initial=0.0))
    if worst > tol:
        raise ValidationError(f"negative variance of magnitude {worst:.3g} exceeds {tol}")
