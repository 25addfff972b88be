import math

import numpy as np
import pytest

from a2k.attention import A2KConfig, a2k_forward
from a2k.errors import ValidationError
from a2k.losses import (
    LossWeights,
    SyntheticExtractor,
    a2k_matching_loss,
    ada_a2k_matching_loss,
    global_style_loss,
    load_feature_dir,
    matching_configs,
    save_feature_dir,
    total_loss,
)
from a2k.stats import ada_a2k_forward

SMALL_CHANNELS = (4, 8, 8, 8, 8)
SMALL_EDGES = (4, 2, 2, 1)


def small_feats(rng, size=32, batch=1):
    ext = SyntheticExtractor(channels=SMALL_CHANNELS, seed=int(rng.integers(1 << 30)))
    return ext(rng.standard_normal((batch, 3, size, size)))


def configs_for(content):
    return matching_configs(content, SMALL_EDGES, heads=2)


def targets(transfer, content, style, configs):
    return [content[0]] + [transfer(c, s, cfg) for c, s, cfg in zip(content[1:], style[1:], configs)]


def test_extractor_shapes_and_determinism(rng):
    x = rng.standard_normal((2, 3, 32, 32))
    a = SyntheticExtractor(seed=3)(x)
    b = SyntheticExtractor(seed=3)(x)
    assert [f.shape for f in a] == [(2, 64, 32, 32), (2, 128, 16, 16), (2, 256, 8, 8), (2, 512, 4, 4), (2, 512, 2, 2)]
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa, fb)
        assert fa.dtype == np.float32 and fa.min() >= 0


def test_extractor_rejects_bad_input(rng):
    with pytest.raises(ValidationError):
        SyntheticExtractor()(rng.standard_normal((1, 3, 24, 24)))
    with pytest.raises(ValidationError):
        SyntheticExtractor()(rng.standard_normal((1, 4, 32, 32)))


def test_global_style_identical_is_zero(rng):
    feats = small_feats(rng)
    assert global_style_loss(feats, feats) == 0.0


def test_global_style_uniform_shift(rng):
    feats = small_feats(rng)
    shifted = list(feats)
    shifted[2] = feats[2] + 1.0
    assert global_style_loss(shifted, feats) == pytest.approx(math.sqrt(SMALL_CHANNELS[2]), abs=1e-5)


def test_global_style_ignores_layer_five(rng):
    feats = small_feats(rng)
    other = list(feats)
    other[4] = feats[4] + 7.0
    assert global_style_loss(other, feats) == 0.0


def test_global_style_permutation_invariant(rng):
    a, b = small_feats(rng), small_feats(rng)
    permuted = []
    for f in a:
        flat = f.reshape(*f.shape[:2], -1)
        perm = rng.permutation(flat.shape[-1])
        permuted.append(flat[..., perm].reshape(f.shape))
    assert global_style_loss(permuted, b) == pytest.approx(global_style_loss(a, b), abs=1e-5)
    assert global_style_loss(permuted, a) == pytest.approx(0.0, abs=1e-5)


def test_global_style_layer_mismatch(rng):
    a = small_feats(rng)
    with pytest.raises(ValidationError):
        global_style_loss(a[:3], a)
    bad = list(a)
    bad[1] = a[1][:, :3]
    with pytest.raises(ValidationError):
        global_style_loss(bad, a)


@pytest.mark.parametrize("loss,transfer", [
    (a2k_matching_loss, a2k_forward),
    (ada_a2k_matching_loss, ada_a2k_forward),
])
def test_matching_self_target_and_unit_perturbation(loss, transfer, rng):
    content, style = small_feats(rng), small_feats(rng)
    cfgs = configs_for(content)
    target = targets(transfer, content, style, cfgs)
    assert loss(target, content, style, cfgs) == pytest.approx(0.0, abs=1e-5)

    noise = rng.standard_normal(target[3].shape)
    noise /= np.linalg.norm(noise)
    perturbed = list(target)
    perturbed[3] = (target[3].astype(np.float64) + noise).astype(np.float32)
    assert loss(perturbed, content, style, cfgs) == pytest.approx(1.0, abs=1e-5)
    # layer 1 plays no part in the matching terms
    perturbed[0] = perturbed[0] + 5
    assert loss(perturbed, content, style, cfgs) == pytest.approx(1.0, abs=1e-5)


def test_ada_matching_constant_style_closed_form(rng):
    content = small_feats(rng)
    c = 0.75
    style = [np.full_like(f, c) for f in content]
    stylized = [np.full_like(f, 0.5) for f in content]
    expected = sum(math.sqrt(f.size) * abs(0.5 - 2 * c) for f in content[1:])
    got = ada_a2k_matching_loss(stylized, content, style, configs_for(content))
    assert got == pytest.approx(expected, rel=1e-6)


def test_matching_shape_mismatch(rng):
    content, style = small_feats(rng), small_feats(rng)
    stylized = list(content)
    stylized[2] = content[2][:, :, :4, :4]
    with pytest.raises(ValidationError):
        a2k_matching_loss(stylized, content, style, configs_for(content))


def test_matching_indivisible_patch_edge(rng):
    content, style = small_feats(rng), small_feats(rng)
    cfgs = matching_configs(content, (4, 2, 2, 4), heads=2)
    with pytest.raises(ValidationError):
        a2k_matching_loss(content, content, style, cfgs)


def test_matching_rejects_parametric_config(rng):
    content, style = small_feats(rng), small_feats(rng)
    cfgs = configs_for(content)
    cfgs[0] = A2KConfig(channels=8, patch_edge=4, heads=2, parametric=True)
    with pytest.raises(ValidationError):
        ada_a2k_matching_loss(content, content, style, cfgs)


def test_total_loss_examples():
    assert total_loss((1, 1, 1), LossWeights()) == 12.0
    assert total_loss((0, 0, 0), LossWeights()) == 0.0


def test_total_loss_linearity_and_monotonicity():
    # dyadic values keep every product and sum exact
    parts = (0.25, 1.75, 2.125)
    base = total_loss(parts, LossWeights(10, 0.5, 1.5))
    doubled = total_loss(parts, LossWeights(10, 1.0, 1.5))
    assert doubled - base == 0.5 * parts[1]
    assert total_loss((0.5, 1.75, 2.125)) - base == 10 * 0.25
    assert total_loss(parts, LossWeights(10, 0.5, 2.0)) > base


@pytest.mark.parametrize("bad", [(-1, 0.5, 1.5), (float("nan"), 0.5, 1.5), (10, float("inf"), 1.5)])
def test_loss_weights_validation(bad):
    with pytest.raises(ValidationError):
        LossWeights(*bad)


def test_total_loss_rejects_negative_parts():
    with pytest.raises(ValidationError):
        total_loss((1, -1, 1))


def test_feature_dir_round_trip(tmp_path, rng):
    feats = small_feats(rng)
    save_feature_dir(tmp_path, feats)
    back = load_feature_dir(tmp_path)
    for a, b in zip(feats, back):
        np.testing.assert_array_equal(a, b)
