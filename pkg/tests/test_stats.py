import numpy as np
import pytest

from a2k.attention import A2KConfig, attention_branches, reshuffle
from a2k.blocking import block, unblock
from a2k.errors import DimensionError, ValidationError
from a2k.oracle import all2all_attention
from a2k.stats import (
    ada_a2k_forward,
    all2all_adaattn_forward,
    attention_moments,
    check_moments,
)
from a2k.tensor import instance_norm, softmax_last_axis

from conftest import randn


def random_scores(rng, shape):
    return softmax_last_axis(randn(rng, *shape, scale=3))


@pytest.mark.parametrize("axis,score_shape,value_shape", [
    ("distributed", (1, 2, 4, 3, 5), (1, 2, 3, 5, 4)),
    ("progressive", (1, 2, 3, 4, 4), (1, 2, 3, 3, 4)),
])
def test_constant_values(axis, score_shape, value_shape, rng):
    c = np.float32(0.7310585)
    m = attention_moments(random_scores(rng, score_shape), np.full(value_shape, c), axis)
    np.testing.assert_allclose(m.mean, c, atol=1e-6)
    assert np.all(m.std == 0.0)


def test_two_point_distribution():
    scores = np.full((1, 1, 1, 1, 2), 0.5, np.float32)
    values = np.array([1.0, 3.0], np.float32).reshape(1, 1, 1, 2, 1)
    m = attention_moments(scores, values, "distributed")
    assert m.mean.item() == pytest.approx(2.0, abs=1e-7)
    assert m.std.item() == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("axis", ["distributed", "progressive"])
def test_one_hot_scores_gather(axis, rng):
    if axis == "distributed":
        values = randn(rng, 2, 2, 3, 5, 4)
        pick = rng.integers(0, 5, size=(2, 2, 4, 6))
        scores = np.eye(5, dtype=np.float32)[pick]
        m = attention_moments(scores, values, axis)
        expected = np.take_along_axis(values[:, :, :, None, :, :].transpose(0, 1, 2, 5, 3, 4),
                                      pick[:, :, None, :, :, None], axis=-1)[..., 0].transpose(0, 1, 2, 4, 3)
    else:
        values = randn(rng, 2, 2, 3, 6, 4)
        pick = rng.integers(0, 4, size=(2, 2, 6, 4))
        scores = np.eye(4, dtype=np.float32)[pick]
        m = attention_moments(scores, values, axis)
        expected = np.take_along_axis(values[:, :, :, :, None, :], pick[:, :, None, :, :, None], axis=-1)[..., 0]
    np.testing.assert_array_equal(m.mean, expected)
    assert np.all(m.std == 0.0)


def test_moments_properties(rng):
    scores = random_scores(rng, (2, 2, 4, 6, 6))
    values = randn(rng, 2, 2, 3, 6, 4, scale=5) + 2
    m = attention_moments(scores, values, "distributed")
    assert np.all(m.std >= 0)
    assert -m.raw_variance.min() < 1e-4
    check_moments(m)
    w = scores.astype(np.float64)
    w /= w.sum(-1, keepdims=True)
    mean_sq = np.einsum("bhyxz,bhczy->bhcxy", w, values.astype(np.float64) ** 2)
    assert np.all(mean_sq >= m.mean.astype(np.float64) ** 2 - 1e-5)


def test_check_moments_flags_large_negative_variance(rng):
    m = attention_moments(random_scores(rng, (1, 1, 2, 2, 2)), randn(rng, 1, 1, 1, 2, 2))
    bad = type(m)(m.mean, m.std, m.raw_variance - 1.0)
    with pytest.raises(ValidationError):
        check_moments(bad)


def test_moments_reject_mismatched_shapes(rng):
    with pytest.raises(DimensionError):
        attention_moments(random_scores(rng, (1, 1, 4, 3, 5)), randn(rng, 1, 1, 2, 6, 4))
    with pytest.raises(ValueError):
        attention_moments(random_scores(rng, (1, 1, 4, 3, 5)), randn(rng, 1, 1, 2, 5, 4), axis="sideways")


def test_ada_constant_style(rng):
    content = randn(rng, 1, 8, 8, 8)
    style = np.full((1, 8, 8, 8), 1.25, np.float32)
    for parametric in (False, True):
        cfg = A2KConfig(channels=8, patch_edge=2, heads=2, parametric=parametric)
        np.testing.assert_array_equal(ada_a2k_forward(content, style, cfg), 2.5)


def test_ada_constant_content(rng):
    content = np.full((1, 8, 8, 8), -3.0, np.float32)
    style = randn(rng, 1, 8, 8, 8)
    cfg = A2KConfig(channels=8, patch_edge=4, heads=2, parametric=False)
    out = ada_a2k_forward(content, style, cfg)
    parts = attention_branches(content, style, cfg, keep_scores=True)
    raw = block(style, 4, 2)
    m_d = attention_moments(parts.da_scores, raw, "distributed").mean
    m_p = attention_moments(parts.pa_scores, reshuffle(raw, parts.pa_index), "progressive").mean
    expected = unblock(m_d, 8, 8).astype(np.float64) + unblock(m_p, 8, 8)
    np.testing.assert_allclose(out, expected, atol=1e-6)


@pytest.mark.parametrize("parametric", [False, True])
def test_ada_composes_from_sub_ops(parametric, rng):
    content, style = randn(rng, 2, 8, 8, 8), randn(rng, 2, 8, 8, 8)
    cfg = A2KConfig(channels=8, patch_edge=2, heads=4, seed=2, parametric=parametric)
    parts = attention_branches(content, style, cfg, keep_scores=True)
    raw = block(style, 2, 4)
    md = attention_moments(parts.da_scores, raw, "distributed")
    mp = attention_moments(parts.pa_scores, reshuffle(raw, parts.pa_index), "progressive")
    s = unblock(md.std, 8, 8).astype(np.float64) + unblock(mp.std, 8, 8)
    m = unblock(md.mean, 8, 8).astype(np.float64) + unblock(mp.mean, 8, 8)
    expected = s * instance_norm(content) + m
    np.testing.assert_allclose(ada_a2k_forward(content, style, cfg), expected, atol=1e-5)


def test_ada_single_branch(rng):
    content, style = randn(rng, 1, 4, 4, 4), randn(rng, 1, 4, 4, 4)
    cfg = A2KConfig(channels=4, patch_edge=2, heads=1, parametric=False, enable_pa=False)
    parts = attention_branches(content, style, cfg, keep_scores=True)
    md = attention_moments(parts.da_scores, block(style, 2, 1), "distributed")
    expected = unblock(md.std, 4, 4).astype(np.float64) * instance_norm(content) + unblock(md.mean, 4, 4)
    np.testing.assert_allclose(ada_a2k_forward(content, style, cfg), expected, atol=1e-6)


def test_adaattn_constant_style(rng):
    out = all2all_adaattn_forward(randn(rng, 1, 4, 5, 5), np.full((1, 4, 3, 3), -0.5, np.float32))
    np.testing.assert_array_equal(out, -0.5)


def test_adaattn_single_style_pixel(rng):
    content = randn(rng, 1, 4, 3, 3)
    style = randn(rng, 1, 4, 1, 1)
    out = all2all_adaattn_forward(content, style)
    np.testing.assert_allclose(out, np.broadcast_to(style, content.shape), atol=1e-7)


def test_adaattn_matches_dense_oracle(rng):
    content, style = randn(rng, 1, 8, 6, 6), randn(rng, 1, 8, 6, 6)
    q, k = instance_norm(content), instance_norm(style)
    mean = all2all_attention(q, k, style)
    mean_sq = all2all_attention(q, k, style.astype(np.float64) ** 2)
    std = np.sqrt(np.maximum(mean_sq - mean ** 2, 0))
    expected = std * instance_norm(content) + mean
    np.testing.assert_allclose(all2all_adaattn_forward(content, style), expected, atol=1e-5)


def test_adaattn_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        all2all_adaattn_forward(randn(rng, 1, 4, 3, 3), randn(rng, 1, 5, 3, 3))
