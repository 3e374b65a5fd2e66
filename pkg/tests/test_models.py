"""Network architecture tests.

The stride-2 convolution and transpose-convolution stages are checked against
slow reference implementations written directly from the sliding-window and
scatter definitions (scipy correlation for the forward direction, an explicit
accumulation loop for the transpose), so layout conventions and padding
arithmetic are pinned independently of the module code.
"""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import correlate2d

from tandempaint.errors import ParameterError, ShapeError
from tandempaint.models import (
    Discriminator,
    Generator,
    NetConfig,
    Weights,
    build_generator,
    colorist_forward,
    discriminator_forward,
    extract_weights,
    init_weights,
    load_weights_into,
    param_count,
    plan_shapes,
    shading_forward,
)
from tandempaint.raster import Raster

torch.set_num_threads(1)


# --- reference implementations ------------------------------------------------


def conv_stride2_reference(img: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """5x5 stride-2 convolution with zero padding, via dense correlation.

    img is (c_in, h, w); kernel is the canonical (k, k, c_in, c_out) layout.
    """
    k = kernel.shape[0]
    pad = k // 2
    cin, h, w = img.shape
    cout = kernel.shape[3]
    padded = np.pad(img.astype(np.float64), ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((cout, h, w), dtype=np.float64)
    for o in range(cout):
        acc = np.zeros((h, w), dtype=np.float64)
        for c in range(cin):
            acc += correlate2d(padded[c], kernel[:, :, c, o].astype(np.float64), mode="valid")
        out[o] = acc + bias[o]
    return out[:, ::2, ::2]


def deconv_stride2_reference(
    img: np.ndarray, kernel: np.ndarray, bias: np.ndarray, out_hw: tuple
) -> np.ndarray:
    """Stride-2 transpose convolution by direct scatter accumulation."""
    k = kernel.shape[0]
    pad = k // 2
    _, h, w = img.shape
    cout = kernel.shape[3]
    oh, ow = out_hw
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for ky in range(k):
                y = 2 * i + ky - pad
                if not 0 <= y < oh:
                    continue
                for kx in range(k):
                    x = 2 * j + kx - pad
                    if not 0 <= x < ow:
                        continue
                    out[:, y, x] += kernel[ky, kx].astype(np.float64).T @ img[:, i, j]
    return out + bias.astype(np.float64)[:, None, None]


def expected_param_total(cfg: NetConfig, side: int | None = None) -> int:
    """k^2 * c_in * c_out + c_out per stage, re-derived from the channel rules."""
    feat = lambda s: min(cfg.base_features * 2**s, cfg.feature_cap)
    k = cfg.filter_size
    stages = max(cfg.depth, 4) if cfg.head == "block_grid" else cfg.depth
    total = 0
    prev = cfg.in_channels
    for s in range(stages):
        total += k * k * prev * feat(s) + feat(s)
        prev = feat(s)
    if cfg.head == "scalar":
        total += prev * (side // 2**cfg.depth) ** 2 * 1 + 1
        return total
    dec_stages = cfg.depth if cfg.head == "full_res" else max(0, cfg.depth - 4)
    for j in range(dec_stages):
        cin = prev if j == 0 else prev + feat(cfg.depth - 1 - j)
        if cfg.head == "full_res" and j == dec_stages - 1:
            cout = cfg.base_features
        else:
            cout = feat(cfg.depth - 2 - j)
        total += k * k * cin * cout + cout
        prev = cout
    head_in = 2 * feat(3) if cfg.head == "block_grid" and cfg.depth > 4 else prev
    total += head_in * cfg.out_channels + cfg.out_channels
    return total


def small_shading_cfg(depth=3):
    return NetConfig(
        in_channels=4, out_channels=3, head="full_res", depth=depth,
        base_features=4, feature_cap=16,
    )


def rand_raster(rng, h, w, c):
    return Raster.from_array(rng.random((h, w, c), dtype=np.float32))


# --- shape planning ------------------------------------------------------------


def test_plan_depth4_256_encoder():
    cfg = NetConfig(in_channels=4, out_channels=3, head="full_res")
    plan = plan_shapes(cfg, 256, 256)
    got = [(s.height, s.width, s.channels) for s in plan.encoder]
    assert got == [(128, 128, 64), (64, 64, 128), (32, 32, 256), (16, 16, 512)]


def test_plan_depth4_256_decoder_returns_to_input():
    cfg = NetConfig(in_channels=4, out_channels=3, head="full_res")
    plan = plan_shapes(cfg, 256, 256)
    got = [(s.height, s.width, s.channels) for s in plan.decoder]
    assert got == [(32, 32, 256), (64, 64, 128), (128, 128, 64), (256, 256, 64)]


def test_plan_depth5_channels_hit_cap_twice():
    cfg = NetConfig(in_channels=4, out_channels=3, head="full_res", depth=5)
    plan = plan_shapes(cfg, 512, 512)
    assert [s.channels for s in plan.encoder] == [64, 128, 256, 512, 512]


def test_plan_depth1_single_stage():
    cfg = NetConfig(in_channels=4, out_channels=3, head="full_res", depth=1)
    plan = plan_shapes(cfg, 2, 2)
    assert [(s.height, s.width, s.channels) for s in plan.encoder] == [(1, 1, 64)]
    assert [(s.height, s.width) for s in plan.decoder] == [(2, 2)]


def test_plan_indivisible_raises_naming_multiple():
    cfg = NetConfig(in_channels=4, out_channels=3, head="full_res")
    with pytest.raises(ShapeError, match="16"):
        plan_shapes(cfg, 250, 250)
    cfg3 = NetConfig(in_channels=4, out_channels=3, head="full_res", depth=3)
    with pytest.raises(ShapeError, match="8"):
        plan_shapes(cfg3, 30, 32)


def test_plan_block_grid_needs_multiple_of_16_even_when_shallow():
    cfg = NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=1)
    with pytest.raises(ShapeError, match="16"):
        plan_shapes(cfg, 40, 40)
    plan = plan_shapes(cfg, 32, 32)
    # extra encoder stages carry the grid down to 1/16 resolution
    assert (plan.encoder[-1].height, plan.encoder[-1].width) == (2, 2)
    assert len(plan.encoder) == 4
    assert plan.decoder == ()


def test_plan_block_grid_deep_decodes_back_to_grid():
    cfg = NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=5)
    plan = plan_shapes(cfg, 64, 64)
    assert (plan.encoder[-1].height, plan.encoder[-1].width) == (2, 2)
    assert [(s.height, s.width) for s in plan.decoder] == [(4, 4)]


def test_plan_scalar_fc_size():
    cfg = NetConfig(in_channels=7, out_channels=1, head="scalar")
    assert plan_shapes(cfg, 256, 256).fc_in == 16 * 16 * 512
    small = NetConfig(in_channels=7, out_channels=1, head="scalar", depth=2, base_features=4)
    assert plan_shapes(small, 32, 32).fc_in == 8 * 8 * 8


@settings(max_examples=40, deadline=None)
@given(
    depth=st.integers(min_value=1, max_value=5),
    mult=st.integers(min_value=1, max_value=8),
)
def test_plan_property_halving_and_mirror(depth, mult):
    side = 2**depth * mult
    cfg = NetConfig(
        in_channels=4, out_channels=3, head="full_res", depth=depth,
        base_features=8, feature_cap=64,
    )
    plan = plan_shapes(cfg, side, side)
    h = side
    for stage in plan.encoder:
        h //= 2
        assert (stage.height, stage.width) == (h, h)
    for stage in plan.decoder:
        h *= 2
        assert (stage.height, stage.width) == (h, h)
    assert h == side


# --- configuration validation ---------------------------------------------------


def test_config_rejects_bad_values():
    base = dict(in_channels=4, out_channels=3, head="full_res")
    with pytest.raises(ParameterError):
        NetConfig(**base, filter_size=4)
    with pytest.raises(ParameterError):
        NetConfig(**base, stride=1)
    with pytest.raises(ParameterError):
        NetConfig(**base, depth=0)
    with pytest.raises(ParameterError):
        NetConfig(**base, base_features=64, feature_cap=32)
    with pytest.raises(ParameterError):
        NetConfig(in_channels=4, out_channels=3, head="banana")
    with pytest.raises(ParameterError):
        NetConfig(in_channels=0, out_channels=3, head="full_res")


# --- weight initialization -------------------------------------------------------


def test_init_kernel_shape_and_stage_parameter_count():
    cfg = NetConfig(
        in_channels=4, out_channels=3, head="full_res", depth=1,
        base_features=8, feature_cap=8,
    )
    w = init_weights(cfg, seed=0)
    kernel = w.tensors["encoder.0.weight"]
    bias = w.tensors["encoder.0.bias"]
    assert kernel.shape == (5, 5, 4, 8)
    assert kernel.size + bias.size == 808


def test_init_statistics():
    # >= 1e5 entries in a single kernel: 5*5*16*256
    cfg = NetConfig(
        in_channels=16, out_channels=3, head="full_res", depth=2,
        base_features=256, feature_cap=256,
    )
    w = init_weights(cfg, seed=1)
    kernel = w.tensors["encoder.0.weight"]
    assert kernel.size >= 100_000
    target = math.sqrt(2.0 / (25 * 16))
    assert abs(kernel.std() - target) / target < 0.05
    assert abs(kernel.mean()) < 1e-3
    # +/- 2 sigma truncation, rescaled so the realized std matches the target
    bound = 2.0 * target / 0.8796256610342398
    assert np.max(np.abs(kernel)) <= bound * (1 + 1e-5)
    assert np.max(np.abs(kernel)) > 2.2 * target


def test_init_biases_zero():
    w = init_weights(small_shading_cfg(), seed=3)
    for name, t in w.tensors.items():
        if name.endswith(".bias"):
            assert np.all(t == 0.0), name


def test_init_deterministic_and_seed_sensitive():
    cfg = small_shading_cfg()
    a = init_weights(cfg, seed=11)
    b = init_weights(cfg, seed=11)
    c = init_weights(cfg, seed=12)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])
    assert any(not np.array_equal(a.tensors[n], c.tensors[n]) for n in a.tensors)


def test_init_dtype_and_finiteness():
    w = init_weights(small_shading_cfg(), seed=4)
    for t in w.tensors.values():
        assert t.dtype == np.float32
        assert np.all(np.isfinite(t))


def test_scalar_init_requires_side():
    cfg = NetConfig(in_channels=7, out_channels=1, head="scalar", depth=2, base_features=4)
    with pytest.raises(ParameterError):
        init_weights(cfg, seed=0, side=None)
    w = init_weights(cfg, seed=0, side=32)
    assert w.tensors["fc.weight"].shape == (8 * 8 * 8, 1)
    assert w.side == 32


def test_weight_shapes_do_not_depend_on_input_size():
    # the same generator weights must serve any valid input size
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=5)
    rng = np.random.default_rng(0)
    for side in (32, 64, 128):
        out = shading_forward(rand_raster(rng, side, side, 1), rand_raster(rng, side, side, 3), w)
        assert out.pixels.shape == (side, side, 3)


# --- parameter counting ----------------------------------------------------------


def test_param_count_matches_formula():
    cases = [
        (NetConfig(in_channels=4, out_channels=3, head="full_res", depth=3,
                   base_features=8, feature_cap=32), None),
        (NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=2,
                   base_features=4, feature_cap=64), None),
        (NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=5,
                   base_features=4, feature_cap=16), None),
        (NetConfig(in_channels=7, out_channels=1, head="scalar", depth=3,
                   base_features=8, feature_cap=32), 64),
    ]
    for cfg, side in cases:
        w = init_weights(cfg, seed=0, side=side)
        assert param_count(w) == expected_param_total(cfg, side), cfg.head


# --- convolution stage semantics --------------------------------------------------


def test_encoder_conv_matches_reference():
    cfg = NetConfig(
        in_channels=2, out_channels=3, head="full_res", depth=1,
        base_features=3, feature_cap=3,
    )
    w = init_weights(cfg, seed=7)
    module = Generator(cfg)
    load_weights_into(module, w)
    rng = np.random.default_rng(8)
    img = rng.random((2, 8, 8)).astype(np.float32)
    with torch.no_grad():
        got = module.encoder[0](torch.from_numpy(img)[None])[0].numpy()
    want = conv_stride2_reference(
        img, w.tensors["encoder.0.weight"], w.tensors["encoder.0.bias"]
    )
    assert got.shape == want.shape == (3, 4, 4)
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_decoder_deconv_matches_reference():
    cfg = NetConfig(
        in_channels=2, out_channels=3, head="full_res", depth=1,
        base_features=3, feature_cap=3,
    )
    w = init_weights(cfg, seed=9)
    module = Generator(cfg)
    load_weights_into(module, w)
    rng = np.random.default_rng(10)
    feat = rng.random((3, 4, 4)).astype(np.float32)
    with torch.no_grad():
        got = module.decoder[0](torch.from_numpy(feat)[None], output_size=(8, 8))[0].numpy()
    want = deconv_stride2_reference(
        feat, w.tensors["decoder.0.weight"], w.tensors["decoder.0.bias"], (8, 8)
    )
    assert got.shape == want.shape == (3, 8, 8)
    np.testing.assert_allclose(got, want, atol=1e-5)


# --- forward passes ----------------------------------------------------------------


def test_zero_weights_shading_outputs_half():
    cfg = small_shading_cfg()
    w = init_weights(cfg, seed=0)
    zero = Weights(cfg, {n: np.zeros_like(t) for n, t in w.tensors.items()})
    rng = np.random.default_rng(1)
    out = shading_forward(rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3), zero)
    assert np.all(out.pixels == 0.5)


def test_zero_weights_colorist_outputs_half():
    cfg = NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=1,
                    base_features=4, feature_cap=16)
    w = init_weights(cfg, seed=0)
    zero = Weights(cfg, {n: np.zeros_like(t) for n, t in w.tensors.items()})
    out = colorist_forward(rand_raster(np.random.default_rng(2), 32, 32, 1), zero)
    assert out.pixels.shape == (2, 2, 3)
    assert np.all(out.pixels == 0.5)


def test_zero_weights_discriminator_outputs_exactly_half():
    cfg = NetConfig(in_channels=7, out_channels=1, head="scalar", depth=2, base_features=4)
    w = init_weights(cfg, seed=0, side=32)
    zero = Weights(cfg, {n: np.zeros_like(t) for n, t in w.tensors.items()}, side=32)
    rng = np.random.default_rng(3)
    p = discriminator_forward(
        rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3),
        rand_raster(rng, 32, 32, 3), zero,
    )
    assert p == 0.5


def test_head_bias_propagates_through_zero_network():
    # with every kernel zero, the output is sigmoid(head bias) everywhere
    cfg = small_shading_cfg()
    w = init_weights(cfg, seed=0)
    tensors = {n: np.zeros_like(t) for n, t in w.tensors.items()}
    tensors["head.bias"] = np.full_like(tensors["head.bias"], 0.4)
    rng = np.random.default_rng(4)
    out = shading_forward(rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3),
                          Weights(cfg, tensors))
    assert out.pixels == pytest.approx(1.0 / (1.0 + math.exp(-0.4)), rel=1e-6)


def test_shading_preserves_dims_across_depths_and_sizes():
    rng = np.random.default_rng(5)
    for depth in range(1, 6):
        cfg = small_shading_cfg(depth=depth)
        w = init_weights(cfg, seed=depth)
        for side in (32, 64):
            if side % 2**depth:
                continue
            out = shading_forward(
                rand_raster(rng, side, side, 1), rand_raster(rng, side, side, 3), w
            )
            assert out.pixels.shape == (side, side, 3), (depth, side)
            assert np.all(np.isfinite(out.pixels))


def test_shading_handles_non_square_input():
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=6)
    rng = np.random.default_rng(7)
    out = shading_forward(rand_raster(rng, 32, 64, 1), rand_raster(rng, 32, 64, 3), w)
    assert out.pixels.shape == (32, 64, 3)


def test_colorist_grid_dimensions():
    cfg = NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=4,
                    base_features=4, feature_cap=16)
    w = init_weights(cfg, seed=8)
    rng = np.random.default_rng(9)
    out = colorist_forward(rand_raster(rng, 256, 256, 1), w)
    assert out.pixels.shape == (16, 16, 3)
    deep = NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=5,
                     base_features=4, feature_cap=16)
    wd = init_weights(deep, seed=10)
    out = colorist_forward(rand_raster(rng, 64, 64, 1), wd)
    assert out.pixels.shape == (4, 4, 3)


def test_discriminator_rejects_other_sizes():
    cfg = NetConfig(in_channels=7, out_channels=1, head="scalar", depth=2, base_features=4)
    w = init_weights(cfg, seed=0, side=64)
    rng = np.random.default_rng(11)
    with pytest.raises(ShapeError, match="64"):
        discriminator_forward(
            rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3),
            rand_raster(rng, 32, 32, 3), w,
        )


def test_discriminator_output_strictly_inside_unit_interval():
    cfg = NetConfig(in_channels=7, out_channels=1, head="scalar", depth=2, base_features=4)
    rng = np.random.default_rng(12)
    for seed in range(4):
        w = init_weights(cfg, seed=seed, side=32)
        p = discriminator_forward(
            rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3),
            rand_raster(rng, 32, 32, 3), w,
        )
        assert 0.0 < p < 1.0
        assert math.isfinite(p)


def test_forward_deterministic():
    cfg = small_shading_cfg()
    w = init_weights(cfg, seed=13)
    rng = np.random.default_rng(14)
    o, s = rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3)
    a = shading_forward(o, s, w)
    b = shading_forward(o, s, w)
    assert np.array_equal(a.pixels, b.pixels)


def test_same_weights_give_different_outputs_at_different_content():
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=15)
    rng = np.random.default_rng(16)
    o = rand_raster(rng, 32, 32, 1)
    a = shading_forward(o, rand_raster(rng, 32, 32, 3), w)
    b = shading_forward(o, rand_raster(rng, 32, 32, 3), w)
    assert not np.array_equal(a.pixels, b.pixels)


def test_translation_equivariance_in_the_interior():
    # shifting the input by one full stride footprint shifts the output the
    # same way, away from the zero-padded borders
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=17)
    rng = np.random.default_rng(18)
    patch = rng.random((16, 16), dtype=np.float32)
    shift = 4
    base = np.full((64, 64), 0.5, dtype=np.float32)
    img1 = base.copy()
    img1[20:36, 20:36] = patch
    img2 = base.copy()
    img2[20 + shift:36 + shift, 20 + shift:36 + shift] = patch
    scheme = np.full((64, 64, 3), 0.25, dtype=np.float32)
    out1 = shading_forward(Raster.from_array(img1[:, :, None]),
                           Raster.from_array(scheme), w)
    out2 = shading_forward(Raster.from_array(img2[:, :, None]),
                           Raster.from_array(scheme), w)
    # receptive radius for depth 2 is 4*(2^2-1) = 12
    lo, hi = 12 + shift, 52
    np.testing.assert_allclose(
        out2.pixels[lo:hi, lo:hi],
        out1.pixels[lo - shift:hi - shift, lo - shift:hi - shift],
        atol=1e-4,
    )


def test_wrapper_validation():
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=19)
    rng = np.random.default_rng(20)
    with pytest.raises(ShapeError):  # outline must be single-channel
        shading_forward(rand_raster(rng, 32, 32, 3), rand_raster(rng, 32, 32, 3), w)
    with pytest.raises(ShapeError):  # dimension mismatch between the two inputs
        shading_forward(rand_raster(rng, 32, 32, 1), rand_raster(rng, 64, 64, 3), w)
    with pytest.raises(ShapeError):  # indivisible size
        shading_forward(rand_raster(rng, 30, 30, 1), rand_raster(rng, 30, 30, 3), w)
    with pytest.raises(ShapeError):  # wrong head for the task
        colorist_forward(rand_raster(rng, 32, 32, 1), w)
    ccfg = NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=1,
                     base_features=4, feature_cap=16)
    cw = init_weights(ccfg, seed=21)
    with pytest.raises(ShapeError):
        shading_forward(rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3), cw)


def test_load_rejects_tampered_tensors():
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=22)
    module = Generator(cfg)
    bad = {n: t.copy() for n, t in w.tensors.items()}
    bad["encoder.0.weight"] = bad["encoder.0.weight"][:, :, :, :2]
    with pytest.raises(ShapeError):
        load_weights_into(module, Weights(cfg, bad))
    missing = {n: t for n, t in w.tensors.items() if n != "head.bias"}
    with pytest.raises(ShapeError):
        load_weights_into(module, Weights(cfg, missing))


def test_extract_load_roundtrip_bitwise():
    cfg = small_shading_cfg()
    w = init_weights(cfg, seed=23)
    module = Generator(cfg)
    load_weights_into(module, w)
    back = extract_weights(module, cfg)
    assert set(back.tensors) == set(w.tensors)
    for name in w.tensors:
        assert np.array_equal(back.tensors[name], w.tensors[name]), name


def test_discriminator_roundtrip_and_module_guards():
    cfg = NetConfig(in_channels=7, out_channels=1, head="scalar", depth=2, base_features=4)
    w = init_weights(cfg, seed=24, side=32)
    module = Discriminator(cfg, side=32)
    load_weights_into(module, w)
    back = extract_weights(module, cfg, side=32)
    for name in w.tensors:
        assert np.array_equal(back.tensors[name], w.tensors[name]), name
    with pytest.raises(ParameterError):
        Generator(cfg)
    with pytest.raises(ParameterError):
        Discriminator(small_shading_cfg(), side=32)


def test_weights_reject_non_finite():
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=25)
    bad = {n: t.copy() for n, t in w.tensors.items()}
    bad["encoder.0.weight"][0, 0, 0, 0] = np.nan
    with pytest.raises(ParameterError):
        Weights(cfg, bad)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_random_weights_forward_finite(seed):
    cfg = small_shading_cfg(depth=2)
    w = init_weights(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    out = shading_forward(rand_raster(rng, 32, 32, 1), rand_raster(rng, 32, 32, 3), w)
    assert np.all(np.isfinite(out.pixels))
    assert np.all(out.pixels >= 0.0) and np.all(out.pixels <= 1.0)


def test_build_generator_runs_at_multiple_sizes_with_one_module():
    cfg = small_shading_cfg(depth=2)
    module = build_generator(init_weights(cfg, seed=26))
    rng = np.random.default_rng(27)
    for side in (32, 64, 128):
        x = torch.from_numpy(rng.random((1, 4, side, side)).astype(np.float32))
        with torch.no_grad():
            y = module(x)
        assert tuple(y.shape) == (1, 3, side, side)
