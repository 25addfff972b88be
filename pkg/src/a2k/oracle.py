"""Slow, loop-by-loop reference implementations for the test suites.

Nothing here uses :func:`a2k.tensor.contract`, the blocking helpers or the
kernel backends. Pixel/patch bookkeeping is done with explicit index
arithmetic. Sums are accumulated in float64.

``naive_a2k`` rounds to float32 at the same points where the fast path
stores an intermediate tensor (normalized maps, projections, logits,
scores, branch outputs). Without that, a near-tie in the patch argmax
could resolve differently in the two paths and the comparison would
measure rounding luck instead of correctness.

Loop order is fixed and sums run in ascending index order.
"""

from __future__ import annotations

import itertools
import math

import numba
import numpy as np

from .errors import DimensionError
from .tensor import as_pattern

MASK_LOGIT = -1e9


def counted_contract(a, b, pattern):
    """Contract by enumerating every index tuple; returns ``(result, multiplications)``."""
    pattern = as_pattern(pattern)
    lhs, out_idx = pattern.value.split("->")
    sa, sb = lhs.split(",")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != len(sa) or b.ndim != len(sb):
        raise DimensionError(f"{pattern.value}: operand ranks {a.ndim}, {b.ndim} do not match")
    sizes = {}
    for letters, shape in ((sa, a.shape), (sb, b.shape)):
        for ch, dim in zip(letters, shape):
            if sizes.setdefault(ch, dim) != dim:
                raise DimensionError(f"{pattern.value}: axis '{ch}' has sizes {sizes[ch]} and {dim}")
    letters = sorted(sizes)
    out = np.zeros([sizes[ch] for ch in out_idx], dtype=np.float64)
    count = 0
    for combo in itertools.product(*(range(sizes[ch]) for ch in letters)):
        env = dict(zip(letters, combo))
        out[tuple(env[ch] for ch in out_idx)] += a[tuple(env[ch] for ch in sa)] * b[tuple(env[ch] for ch in sb)]
        count += 1
    return out.astype(np.float32), count


@numba.njit(cache=True)
def _dense(q, k, v, mask, use_mask):
    nq, c = q.shape
    nk = k.shape[0]
    cv = v.shape[1]
    out = np.zeros((nq, cv))
    logits = np.empty(nk)
    for i in range(nq):
        for j in range(nk):
            s = 0.0
            for ch in range(c):
                s += q[i, ch] * k[j, ch]
            if use_mask and not mask[i, j]:
                s = MASK_LOGIT
            logits[j] = s
        mx = logits[0]
        for j in range(1, nk):
            if logits[j] > mx:
                mx = logits[j]
        tot = 0.0
        for j in range(nk):
            logits[j] = math.exp(logits[j] - mx)
            tot += logits[j]
        for j in range(nk):
            w = logits[j] / tot
            for ch in range(cv):
                out[i, ch] += w * v[j, ch]
    return out


def _tokens(x):
    b, c, h, w = x.shape
    return x.reshape(b, c, h * w).transpose(0, 2, 1)


def all2all_attention(q, k, v, mask=None):
    """Dense softmax attention between every query pixel and every key pixel.

    Maps are (B, C, H, W); tokens are pixels in row-major order. ``mask``
    is an optional boolean (H_q*W_q, H_k*W_k) matrix; masked-out pairs get
    logit -1e9. Returns a float64 map shaped like ``q`` with ``v``'s channels.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 4 or k.ndim != 4 or v.ndim != 4:
        raise DimensionError("q, k, v must be (B, C, H, W)")
    if q.shape[:2] != k.shape[:2]:
        raise DimensionError(f"q {q.shape} and k {k.shape} must share batch and channels")
    if k.shape[0] != v.shape[0] or k.shape[2:] != v.shape[2:]:
        raise DimensionError(f"k {k.shape} and v {v.shape} must share batch and spatial size")
    nq = q.shape[2] * q.shape[3]
    nk = k.shape[2] * k.shape[3]
    use_mask = mask is not None
    m = np.ones((nq, nk), dtype=np.bool_) if mask is None else np.asarray(mask, dtype=np.bool_)
    if m.shape != (nq, nk):
        raise DimensionError(f"mask must be ({nq}, {nk}), got {m.shape}")
    qt, kt, vt = _tokens(q), _tokens(k), _tokens(v)
    out = np.stack([
        np.ascontiguousarray(_dense(np.ascontiguousarray(qt[i]), np.ascontiguousarray(kt[i]),
                                    np.ascontiguousarray(vt[i]), m, use_mask))
        for i in range(q.shape[0])
    ])
    return out.transpose(0, 2, 1).reshape(q.shape[0], v.shape[1], q.shape[2], q.shape[3])


def dilation_mask(height: int, width: int, p: int) -> np.ndarray:
    """Pixel pairs that share the same offset inside their p x p patches."""
    rows, cols = np.divmod(np.arange(height * width), width)
    offset = (rows % p) * p + (cols % p)
    return offset[:, None] == offset[None, :]


def _softmax64(logits):
    e = [math.exp(x - max(logits)) for x in logits]
    s = math.fsum(e)
    return [x / s for x in e]


def naive_distributed_attention(q, k, v):
    """Five nested loops over (b, h, offset, query patch, key patch); float64 result."""
    q, k, v = (np.asarray(t, dtype=np.float64) for t in (q, k, v))
    b_, h_, c_, nq, r = q.shape
    nk = k.shape[3]
    cv = v.shape[2]
    out = np.zeros((b_, h_, cv, nq, r))
    scores = np.zeros((b_, h_, r, nq, nk))
    for b in range(b_):
        for h in range(h_):
            for o in range(r):
                for x in range(nq):
                    logits = [math.fsum(q[b, h, c, x, o] * k[b, h, c, z, o] for c in range(c_)) for z in range(nk)]
                    w = _softmax64(logits)
                    scores[b, h, o, x] = w
                    for c in range(cv):
                        out[b, h, c, x, o] = math.fsum(w[z] * v[b, h, c, z, o] for z in range(nk))
    return out, scores


def naive_progressive_step1(q, k):
    """Exhaustive scan of every (query patch, key patch) pair; first maximum wins."""
    q, k = (np.asarray(t, dtype=np.float64) for t in (q, k))
    b_, h_, c_, n, r = q.shape
    nk = k.shape[3]
    idx = np.zeros((b_, h_, n), dtype=np.int64)
    for b in range(b_):
        for h in range(h_):
            for x in range(n):
                best, best_val = 0, None
                for z in range(nk):
                    s = math.fsum(q[b, h, c, x, o] * k[b, h, c, z, o] for c in range(c_) for o in range(r))
                    if best_val is None or s > best_val:
                        best, best_val = z, s
                idx[b, h, x] = best
    return idx


def naive_progressive_step2(q, ks, vs):
    """Dense attention inside each aligned patch pair, one loop per index; float64 result."""
    q, ks, vs = (np.asarray(t, dtype=np.float64) for t in (q, ks, vs))
    b_, h_, c_, n, r = q.shape
    cv = vs.shape[2]
    out = np.zeros((b_, h_, cv, n, r))
    scores = np.zeros((b_, h_, n, r, r))
    for b in range(b_):
        for h in range(h_):
            for x in range(n):
                for y in range(r):
                    logits = [math.fsum(q[b, h, c, x, y] * ks[b, h, c, x, z] for c in range(c_)) for z in range(r)]
                    w = _softmax64(logits)
                    scores[b, h, x, y] = w
                    for c in range(cv):
                        out[b, h, c, x, y] = math.fsum(w[z] * vs[b, h, c, x, z] for z in range(r))
    return out, scores


@numba.njit(cache=True)
def _f32(x):
    return np.float64(np.float32(x))


@numba.njit(cache=True)
def _norm_map(x, eps):
    bsz, c, h, w = x.shape
    out = np.empty_like(x)
    for b in range(bsz):
        for ch in range(c):
            s = 0.0
            for i in range(h):
                for j in range(w):
                    s += x[b, ch, i, j]
            mean = s / (h * w)
            s = 0.0
            for i in range(h):
                for j in range(w):
                    d = x[b, ch, i, j] - mean
                    s += d * d
            denom = math.sqrt(s / (h * w) + eps)
            for i in range(h):
                for j in range(w):
                    out[b, ch, i, j] = _f32((x[b, ch, i, j] - mean) / denom)
    return out


@numba.njit(cache=True)
def _project(x, weight, bias):
    bsz, c, h, w = x.shape
    co = weight.shape[0]
    out = np.empty((bsz, co, h, w))
    for b in range(bsz):
        for o in range(co):
            for i in range(h):
                for j in range(w):
                    s = 0.0
                    for ch in range(c):
                        s += weight[o, ch] * x[b, ch, i, j]
                    out[b, o, i, j] = _f32(s + bias[o])
    return out


@numba.njit(cache=True)
def _pixel(patch, offset, p, grid_w):
    return (patch // grid_w) * p + offset // p, (patch % grid_w) * p + offset % p


@numba.njit(cache=True)
def _softmax_f32(logits):
    n = logits.shape[0]
    mx = logits[0]
    for j in range(1, n):
        if logits[j] > mx:
            mx = logits[j]
    e = np.empty(n)
    tot = 0.0
    for j in range(n):
        e[j] = math.exp(logits[j] - mx)
        tot += e[j]
    for j in range(n):
        e[j] = _f32(e[j] / tot)
    return e


@numba.njit(cache=True)
def _naive_da(q, k, v, p, heads):
    bsz, c, hq, wq = q.shape
    hk, wk = k.shape[2], k.shape[3]
    ch = c // heads
    cv = v.shape[1] // heads
    r = p * p
    gwq, gwk = wq // p, wk // p
    nq = (hq // p) * gwq
    nk = (hk // p) * gwk
    out = np.zeros((bsz, v.shape[1], hq, wq))
    logits = np.empty(nk)
    for b in range(bsz):
        for hd in range(heads):
            for o in range(r):
                for x in range(nq):
                    qi, qj = _pixel(x, o, p, gwq)
                    for z in range(nk):
                        ki, kj = _pixel(z, o, p, gwk)
                        s = 0.0
                        for cc in range(ch):
                            s += q[b, hd * ch + cc, qi, qj] * k[b, hd * ch + cc, ki, kj]
                        logits[z] = _f32(s)
                    w = _softmax_f32(logits)
                    for cc in range(cv):
                        s = 0.0
                        for z in range(nk):
                            ki, kj = _pixel(z, o, p, gwk)
                            s += w[z] * v[b, hd * cv + cc, ki, kj]
                        out[b, hd * cv + cc, qi, qj] = _f32(s)
    return out


@numba.njit(cache=True)
def _naive_pa(q, k, v, p, heads, step1):
    bsz, c, hgt, wid = q.shape
    ch = c // heads
    cv = v.shape[1] // heads
    r = p * p
    gw = wid // p
    n = (hgt // p) * gw
    out = np.zeros((bsz, v.shape[1], hgt, wid))
    index = np.zeros((bsz, heads, n), dtype=np.int64)
    logits = np.empty(r)
    for b in range(bsz):
        for hd in range(heads):
            for x in range(n):
                best = x
                if step1:
                    best = 0
                    best_val = 0.0
                    for z in range(n):
                        s = 0.0
                        for cc in range(ch):
                            for o in range(r):
                                qi, qj = _pixel(x, o, p, gw)
                                ki, kj = _pixel(z, o, p, gw)
                                s += q[b, hd * ch + cc, qi, qj] * k[b, hd * ch + cc, ki, kj]
                        s = _f32(s)
                        if z == 0 or s > best_val:
                            best = z
                            best_val = s
                index[b, hd, x] = best
                for y in range(r):
                    qi, qj = _pixel(x, y, p, gw)
                    for z in range(r):
                        ki, kj = _pixel(best, z, p, gw)
                        s = 0.0
                        for cc in range(ch):
                            s += q[b, hd * ch + cc, qi, qj] * k[b, hd * ch + cc, ki, kj]
                        logits[z] = _f32(s)
                    w = _softmax_f32(logits)
                    for cc in range(cv):
                        s = 0.0
                        for z in range(r):
                            ki, kj = _pixel(best, z, p, gw)
                            s += w[z] * v[b, hd * cv + cc, ki, kj]
                        out[b, hd * cv + cc, qi, qj] = _f32(s)
    return out, index


def naive_a2k(content, style, cfg, eps: float = 1e-5, return_index: bool = False):
    """Loop transcription of the full all-to-key layer; float32 result.

    Mirrors :func:`a2k.attention.a2k_forward` (same config semantics,
    same float32 storage points) without sharing any of its code.
    """
    content = np.asarray(content, dtype=np.float32)
    style = np.asarray(style, dtype=np.float32)
    cfg.validate_maps(content, style)
    c64 = content.astype(np.float64)
    s64 = style.astype(np.float64)
    proj = {name: (pr.weight.astype(np.float64), pr.bias.astype(np.float64)) for name, pr in cfg.projections.items()}
    cn = _norm_map(c64, eps)
    sn = _norm_map(s64, eps)
    vsrc = s64 if cfg.values_from == "style" else c64
    p, heads = cfg.patch_edge, cfg.heads
    total = c64.copy()
    index = None
    if cfg.enable_da:
        out = _naive_da(_project(cn, *proj["dq"]), _project(sn, *proj["dk"]), _project(vsrc, *proj["dv"]), p, heads)
        total += _project(out, *proj["fus_d"])
    if cfg.enable_pa:
        out, index = _naive_pa(
            _project(cn, *proj["pq"]), _project(sn, *proj["pk"]), _project(vsrc, *proj["pv"]),
            p, heads, cfg.enable_pa_step1,
        )
        total += _project(out, *proj["fus_p"])
    result = total.astype(np.float32)
    if return_index:
        return result, index
    return result
