"""Lossless conversion between feature maps and patch tensors.

A (B, C, H, W) map is cut into non-overlapping p x p patches and the
channels are split contiguously into ``heads`` groups, giving a
(B, heads, C // heads, n, r) tensor with n = (H/p)(W/p) patches of
r = p*p pixels. Patches are numbered row-major over the patch grid and
pixels row-major inside a patch, the same order an unfold with
stride == kernel size produces.

Note on naming: some write-ups call the number of blocks per side the
"block size". Here ``p`` is always the patch edge in pixels.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def _check_map(x):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValidationError(f"expected a (B, C, H, W) feature map, got rank {x.ndim}")
    return x


def check_blockable(shape, p: int, heads: int = 1) -> None:
    """Raise ValidationError unless ``shape`` (B, C, H, W) can be blocked by ``p``/``heads``."""
    _, c, h, w = shape
    if p < 1:
        raise ValidationError(f"patch edge must be positive, got {p}")
    if heads < 1:
        raise ValidationError(f"heads must be positive, got {heads}")
    if h % p:
        raise ValidationError(f"height {h} is not divisible by patch edge {p}")
    if w % p:
        raise ValidationError(f"width {w} is not divisible by patch edge {p}")
    if c % heads:
        raise ValidationError(f"channels {c} are not divisible by heads {heads}")


def block(x: np.ndarray, p: int, heads: int = 1) -> np.ndarray:
    """Cut a (B, C, H, W) map into a (B, heads, C/heads, n, p*p) patch tensor."""
    x = _check_map(x)
    check_blockable(x.shape, p, heads)
    b, c, h, w = x.shape
    gh, gw = h // p, w // p
    # (b, heads, ch, gh, p, gw, p) -> (b, heads, ch, gh, gw, p, p)
    y = x.reshape(b, heads, c // heads, gh, p, gw, p).transpose(0, 1, 2, 3, 5, 4, 6)
    return np.ascontiguousarray(y).reshape(b, heads, c // heads, gh * gw, p * p)


def unblock(y: np.ndarray, height: int, width: int) -> np.ndarray:
    """Exact inverse of :func:`block`; the patch edge is recovered from ``y``'s last axis."""
    y = np.asarray(y)
    if y.ndim != 5:
        raise ValidationError(f"expected a (B, heads, C/heads, n, r) tensor, got rank {y.ndim}")
    b, heads, ch, n, r = y.shape
    p = int(round(r ** 0.5))
    if p * p != r:
        raise ValidationError(f"patch size {r} is not a perfect square")
    if height % p or width % p:
        raise ValidationError(f"{height}x{width} is not divisible by patch edge {p}")
    gh, gw = height // p, width // p
    if gh * gw != n:
        raise ValidationError(f"{n} patches do not tile a {height}x{width} map with patch edge {p}")
    x = y.reshape(b, heads, ch, gh, gw, p, p).transpose(0, 1, 2, 3, 5, 4, 6)
    return np.ascontiguousarray(x).reshape(b, heads * ch, height, width)
