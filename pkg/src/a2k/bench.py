"""Complexity benchmark: instrumented multiply counts and wall time versus image size.

For every (mechanism, size) pair the layer is executed ``reps`` times
under a :class:`~a2k.tensor.MacCounter`. ``measured_macs`` is the number
of multiplications in the similarity (query-key) contractions of one
forward pass; ``theoretical_flops`` is the closed-form count for the same
quantity. Value contractions mirror the similarity ones term by term and
are excluded from both columns.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import astuple, dataclass
from typing import Iterable, Sequence

import numpy as np

from .attention import A2KConfig, a2k_flops, a2k_forward, all2all_forward, blocks_per_side
from .errors import ValidationError
from .tensor import count_macs

MECHANISMS = ("a2k", "all2all")
CSV_HEADER = ("mechanism", "H", "W", "C", "p", "heads", "theoretical_flops", "measured_macs", "wall_time_ns", "reps")


@dataclass(frozen=True)
class BenchRecord:
    mechanism: str
    H: int
    W: int
    C: int
    p: int
    heads: int
    theoretical_flops: int
    measured_macs: int
    wall_time_ns: int
    reps: int


def balanced_patch_edge(height: int, width: int | None = None) -> int:
    """Divisor of the map size nearest to sqrt(height), so patch count ~ patch size.

    Ties go to the smaller edge.
    """
    width = height if width is None else width
    divisors = [d for d in range(1, min(height, width) + 1) if height % d == 0 and width % d == 0]
    target = math.sqrt(height)
    return min(divisors, key=lambda d: (abs(d - target), d))


def resolve_patch_edge(policy, height: int, width: int) -> int:
    if policy == "balanced":
        return balanced_patch_edge(height, width)
    p = int(policy)
    if p < 1 or height % p or width % p:
        raise ValidationError(f"patch edge {p} does not divide {height}x{width}")
    return p


def _run_once(mechanism, content, style, cfg):
    with count_macs() as counter:
        start = time.perf_counter_ns()
        if mechanism == "a2k":
            a2k_forward(content, style, cfg)
        else:
            all2all_forward(content, style, cfg)
        elapsed = time.perf_counter_ns() - start
    return counter.score_macs, max(elapsed, 1)


def bench_one(mechanism: str, size: int, channels: int, block="balanced", heads: int = 8,
              reps: int = 1, seed: int = 0) -> BenchRecord:
    if mechanism not in MECHANISMS:
        raise ValidationError(f"unknown mechanism {mechanism!r}; choose from {MECHANISMS}")
    if reps < 1:
        raise ValidationError(f"reps must be >= 1, got {reps}")
    height = width = size
    rng = np.random.default_rng(seed)
    content = rng.standard_normal((1, channels, height, width)).astype(np.float32)
    style = rng.standard_normal((1, channels, height, width)).astype(np.float32)
    if mechanism == "a2k":
        p = resolve_patch_edge(block, height, width)
        cfg = A2KConfig(channels=channels, patch_edge=p, heads=heads, seed=seed)
        theory = a2k_flops(height, width, channels, blocks_per_side(height, p)).total
    else:
        # dense baseline: single head, single-pixel tokens
        p, heads = 1, 1
        cfg = A2KConfig(channels=channels, patch_edge=1, heads=1, enable_pa=False, seed=seed)
        theory = a2k_flops(height, width, channels, 1).all_to_all
    counts, times = [], []
    for _ in range(reps):
        macs, ns = _run_once(mechanism, content, style, cfg)
        counts.append(macs)
        times.append(ns)
    if len(set(counts)) != 1:
        raise RuntimeError(f"multiply count changed between repetitions: {counts}")
    return BenchRecord(mechanism, height, width, channels, p, heads, theory, counts[0],
                       int(sum(times) // reps), reps)


def run_bench(sizes: Sequence[int], channels: int, block="balanced", heads: int = 8,
              mechanisms: Iterable[str] = MECHANISMS, reps: int = 1, seed: int = 0) -> list[BenchRecord]:
    """Sequentially benchmark every mechanism at every size."""
    if reps < 1:
        raise ValidationError(f"reps must be >= 1, got {reps}")
    if not sizes:
        raise ValidationError("no sizes given")
    mechanisms = list(mechanisms)
    for m in mechanisms:
        if m not in MECHANISMS:
            raise ValidationError(f"unknown mechanism {m!r}; choose from {MECHANISMS}")
    if block != "balanced":
        for s in sizes:
            resolve_patch_edge(block, s, s)
    return [bench_one(m, s, channels, block, heads, reps, seed) for m in mechanisms for s in sizes]


def fit_slope(records: Sequence[BenchRecord]) -> float:
    """Least-squares slope of log(measured_macs) against log(H*W)."""
    if len(records) < 2:
        raise ValidationError("need at least two sizes to fit a slope")
    x = np.log([r.H * r.W for r in records])
    y = np.log([r.measured_macs for r in records])
    return float(np.polyfit(x, y, 1)[0])


def slopes(records: Sequence[BenchRecord]) -> dict[str, float]:
    out = {}
    for mech in dict.fromkeys(r.mechanism for r in records):
        group = [r for r in records if r.mechanism == mech]
        if len(group) >= 2:
            out[mech] = fit_slope(group)
    return out


def to_csv(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(astuple(r))
    for mech, slope in slopes(records).items():
        writer.writerow(("slope", mech, f"{slope:.6f}"))
    return buf.getvalue()


def parse_csv(text: str) -> tuple[list[BenchRecord], dict[str, float]]:
    """Inverse of :func:`to_csv`."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValidationError("missing or unexpected CSV header")
    records, fitted = [], {}
    for row in rows[1:]:
        if row and row[0] == "slope":
            fitted[row[1]] = float(row[2])
        elif row:
            records.append(BenchRecord(row[0], *(int(v) for v in row[1:])))
    return records, fitted
