"""Dense float32 array primitives used by the attention math.

Tensors are plain C-contiguous ``numpy.ndarray`` objects of dtype float32
(index maps are int64). Every exported operation returns a fresh array and
never mutates its inputs.

Only the five contraction patterns of the all-to-key pipeline are
supported by :func:`contract`; each is lowered to a batched ``A @ B.T``
on the active kernel backend (see :mod:`a2k._backend`).
"""

from __future__ import annotations

import contextlib
import contextvars
import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _backend
from .errors import DimensionError

DEFAULT_EPS = 1e-5


class Pattern(str, enum.Enum):
    """The contraction patterns the attention pipeline needs.

    Index letters: b batch, h head, c head-channel, x/z patch index,
    y/z within-patch offset (the letter roles follow each pattern).
    """

    DA_SCORES = "bhcxy,bhczy->bhyxz"
    PA1_SCORES = "bhcxy,bhczy->bhxz"
    PA2_SCORES = "bhcxy,bhcxz->bhxyz"
    DA_VALUES = "bhyxz,bhczy->bhcxy"
    PA2_VALUES = "bhxyz,bhcxz->bhcxy"

    @property
    def is_score(self) -> bool:
        return self in (Pattern.DA_SCORES, Pattern.PA1_SCORES, Pattern.PA2_SCORES)


# the value contraction is printed with a stray channel letter in some sources
_ALIASES = {"bhyxz,bhvzy->bhcxy": Pattern.DA_VALUES}


def as_pattern(pattern: str | Pattern) -> Pattern:
    if isinstance(pattern, Pattern):
        return pattern
    key = pattern.replace(" ", "")
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return Pattern(key)
    except ValueError:
        raise ValueError(f"unsupported contraction pattern {pattern!r}") from None


@dataclass(frozen=True)
class _Plan:
    a_perm: tuple[int, ...]
    b_perm: tuple[int, ...]
    batch: str
    m: str
    n: str
    k: str
    out: str


def _plan(pattern: Pattern) -> _Plan:
    lhs, out = pattern.value.split("->")
    a, b = lhs.split(",")
    batch = "".join(ch for ch in out if ch in a and ch in b)
    m = "".join(ch for ch in a if ch in out and ch not in b)
    n = "".join(ch for ch in b if ch in out and ch not in a)
    k = "".join(ch for ch in a if ch in b and ch not in out)
    return _Plan(
        a_perm=tuple(a.index(ch) for ch in batch + m + k),
        b_perm=tuple(b.index(ch) for ch in batch + n + k),
        batch=batch, m=m, n=n, k=k, out=out,
    )


_PLANS = {p: _plan(p) for p in Pattern}


def _index_sizes(pattern: Pattern, a_shape, b_shape) -> dict[str, int]:
    lhs = pattern.value.split("->")[0]
    sa, sb = lhs.split(",")
    if len(a_shape) != len(sa):
        raise DimensionError(f"{pattern.value}: first operand must have rank {len(sa)}, got {len(a_shape)}")
    if len(b_shape) != len(sb):
        raise DimensionError(f"{pattern.value}: second operand must have rank {len(sb)}, got {len(b_shape)}")
    sizes: dict[str, int] = {}
    for letters, shape, which in ((sa, a_shape, "first"), (sb, b_shape, "second")):
        for ch, dim in zip(letters, shape):
            if ch in sizes and sizes[ch] != dim:
                raise DimensionError(
                    f"{pattern.value}: axis '{ch}' has size {sizes[ch]} but the {which} operand has {dim}"
                )
            sizes[ch] = dim
    return sizes


def contraction_macs(pattern: str | Pattern, a_shape, b_shape) -> int:
    """Scalar multiplications performed by ``contract`` for these shapes."""
    pattern = as_pattern(pattern)
    sizes = _index_sizes(pattern, a_shape, b_shape)
    return math.prod(sizes.values())


@dataclass
class MacCounter:
    """Multiply-accumulate tally, keyed by contraction pattern."""

    by_pattern: Counter = field(default_factory=Counter)

    def add(self, pattern: Pattern, macs: int) -> None:
        self.by_pattern[pattern] += macs

    @property
    def score_macs(self) -> int:
        """MACs of the similarity contractions (the quantity Eq.-13-style accounting counts)."""
        return sum(v for p, v in self.by_pattern.items() if p.is_score)

    @property
    def value_macs(self) -> int:
        return sum(v for p, v in self.by_pattern.items() if not p.is_score)

    @property
    def total(self) -> int:
        return sum(self.by_pattern.values())


_counters: contextvars.ContextVar[tuple[MacCounter, ...]] = contextvars.ContextVar("a2k_mac_counters", default=())


@contextlib.contextmanager
def count_macs() -> Iterator[MacCounter]:
    """Record every :func:`contract` call made inside the block.

    Counters nest; each active counter sees every contraction.
    """
    counter = MacCounter()
    token = _counters.set(_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _counters.reset(token)


def contract(a: np.ndarray, b: np.ndarray, pattern: str | Pattern) -> np.ndarray:
    """Evaluate one of the fixed :class:`Pattern` contractions.

    Products are accumulated in float64 and stored as float32.
    """
    pattern = as_pattern(pattern)
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    sizes = _index_sizes(pattern, a.shape, b.shape)
    plan = _PLANS[pattern]

    def prod(letters):
        return math.prod(sizes[ch] for ch in letters)

    g, m, n, k = prod(plan.batch), prod(plan.m), prod(plan.n), prod(plan.k)
    a3 = np.ascontiguousarray(a.transpose(plan.a_perm)).reshape(g, m, k)
    b3 = np.ascontiguousarray(b.transpose(plan.b_perm)).reshape(g, n, k)
    c = _backend.kernels().matmul_nt(a3, b3)

    natural = plan.batch + plan.m + plan.n
    c = c.reshape([sizes[ch] for ch in natural])
    out = np.ascontiguousarray(c.transpose([natural.index(ch) for ch in plan.out]))

    active = _counters.get()
    if active:
        macs = g * m * n * k
        for counter in active:
            counter.add(pattern, macs)
    return out


def softmax_last_axis(x: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis (no temperature scaling)."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 0:
        raise DimensionError("softmax needs rank >= 1")
    rows = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    return _backend.kernels().softmax_rows(rows).reshape(x.shape)


def argmax_last_axis(x: np.ndarray) -> np.ndarray:
    """Index of the maximum along the last axis; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("argmax needs rank >= 1 and a non-empty last axis")
    rows = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    return _backend.kernels().argmax_rows(rows).reshape(x.shape[:-1])


def instance_norm(x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """``(x - mean) / sqrt(var + eps)`` per (batch, channel) over the spatial axes.

    Uses the population variance. A spatially constant channel maps to zeros.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise DimensionError(f"instance_norm expects (B, C, H, W), got rank {x.ndim}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=(2, 3), keepdims=True)
    var = ((x64 - mean) ** 2).mean(axis=(2, 3), keepdims=True)
    return ((x64 - mean) / np.sqrt(var + eps)).astype(np.float32)


@dataclass(frozen=True)
class ChannelProjection:
    """A 1x1 convolution: ``out[o] = sum_i weight[o, i] * x[i] + bias[o]``."""

    weight: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float32)
        if w.ndim != 2:
            raise DimensionError(f"projection weight must be (C_out, C_in), got shape {w.shape}")
        bias = np.zeros(w.shape[0], np.float32) if self.bias is None else np.array(self.bias, dtype=np.float32)
        if bias.shape != (w.shape[0],):
            raise DimensionError(f"projection bias must have shape ({w.shape[0]},), got {bias.shape}")
        w.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", bias)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def identity(cls, channels: int) -> "ChannelProjection":
        return cls(np.eye(channels, dtype=np.float32))

    @classmethod
    def random(cls, c_out: int, c_in: int, rng: np.random.Generator) -> "ChannelProjection":
        """Uniform in [-1/sqrt(c_in), 1/sqrt(c_in)], weight drawn before bias."""
        bound = 1.0 / math.sqrt(c_in)
        weight = rng.uniform(-bound, bound, size=(c_out, c_in))
        bias = rng.uniform(-bound, bound, size=c_out)
        return cls(weight, bias)

    def __eq__(self, other):
        if not isinstance(other, ChannelProjection):
            return NotImplemented
        return np.array_equal(self.weight, other.weight) and np.array_equal(self.bias, other.bias)

    __hash__ = None


def project_channels(x: np.ndarray, proj: ChannelProjection) -> np.ndarray:
    """Apply a 1x1 convolution to a (B, C, H, W) feature map."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise DimensionError(f"project_channels expects (B, C, H, W), got rank {x.ndim}")
    if x.shape[1] != proj.in_channels:
        raise DimensionError(
            f"axis 'channel' has size {x.shape[1]} but the projection expects {proj.in_channels}"
        )
    out = np.einsum("oc,bchw->bohw", proj.weight.astype(np.float64), x.astype(np.float64))
    out += proj.bias.astype(np.float64)[None, :, None, None]
    return out.astype(np.float32)
