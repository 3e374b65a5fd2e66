"""Metric tests.

Oracles here are constructed images whose scores are known in closed form: a
perfectly colored scene must score zero error and full hit rate, a white
canvas must score the baseline. The trained-network paths only get plumbing
coverage; their quality bars live in the acceptance suite.
"""

import numpy as np
import pytest

from tandempaint.errors import DatasetError, ParameterError, ShapeError
from tandempaint.evaluate import (
    HintReport,
    discriminator_accuracy,
    evaluate_corpus,
    hint_adherence,
    mse,
    region_hints,
    white_baseline_mse,
)
from tandempaint.models import NetConfig, init_weights
from tandempaint.raster import Raster
from tandempaint.synth import generate_corpus, generate_scene
from tandempaint.training import OptState, TrainConfig, d_step, default_disc_net, train
from tandempaint.prep import load_example, load_manifest


@pytest.fixture(scope="module")
def scene():
    return generate_scene(64, seed=5)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval_corpus")
    generate_corpus(n=4, side=64, master_seed=31, out_dir=root)
    return root


def fill_image(regions):
    """Paint every region with exactly its ground-truth color."""
    h, w = regions.labels.shape
    out = np.ones((h, w, 3), np.float32)
    for rid in regions.region_ids():
        out[regions.labels == rid] = regions.fills[rid].as_array()
    return Raster.from_array(out)


def test_mse_and_white_baseline():
    a = Raster.from_array(np.zeros((8, 8, 3), np.float32))
    b = Raster.from_array(np.full((8, 8, 3), 0.5, np.float32))
    assert mse(a, b) == pytest.approx(0.25)
    assert mse(a, a) == 0.0
    assert white_baseline_mse(a) == pytest.approx(1.0)
    assert white_baseline_mse(b) == pytest.approx(0.25)
    with pytest.raises(ShapeError):
        mse(a, Raster.from_array(np.zeros((8, 9, 3), np.float32)))


def test_region_hints_are_binary_and_inside(scene):
    _, regions = scene
    hints = region_hints(regions)
    alpha = hints.pixels[:, :, 3]
    assert set(np.unique(alpha)) <= {0.0, 1.0}
    hinted = alpha > 0
    assert hinted.any()
    # every hinted pixel sits inside a region and carries that region's fill
    labels = regions.labels[hinted]
    assert np.all(labels > 0)
    for rid in regions.region_ids():
        sel = hinted & (regions.labels == rid)
        assert sel.any(), f"region {rid} got no hint"
        np.testing.assert_array_equal(
            hints.pixels[sel, :3],
            np.broadcast_to(regions.fills[rid].as_array(), (sel.sum(), 3)),
        )
    with pytest.raises(ParameterError):
        region_hints(regions, radius=0)


def test_hint_adherence_perfect_image_scores_zero(scene):
    _, regions = scene
    report = hint_adherence(fill_image(regions), regions)
    assert all(v == 0.0 for v in report.region_mae.values())
    assert report.hit_rate() == 1.0
    assert report.intra_region_std == 0.0
    if len(regions.region_ids()) >= 2:
        assert report.inter_region_distance > 0.1


def test_hint_adherence_white_image_misses(scene):
    _, regions = scene
    h, w = regions.labels.shape
    white = Raster.from_array(np.ones((h, w, 3), np.float32))
    report = hint_adherence(white, regions)
    # bright palette fills still sit well away from pure white
    assert all(v > 0.15 for v in report.region_mae.values())
    assert report.hit_rate() == 0.0
    assert report.inter_region_distance == 0.0


def test_hint_adherence_validation(scene):
    _, regions = scene
    h, w = regions.labels.shape
    with pytest.raises(ShapeError):
        hint_adherence(Raster.from_array(np.ones((h, w, 1), np.float32)), regions)
    with pytest.raises(ShapeError):
        hint_adherence(
            Raster.from_array(np.ones((h + 1, w, 3), np.float32)), regions
        )


def test_hit_rate_threshold():
    report = HintReport(
        region_mae={1: 0.05, 2: 0.10, 3: 0.30},
        intra_region_std=0.0,
        inter_region_distance=1.0,
    )
    assert report.hit_rate(0.15) == pytest.approx(2 / 3)
    assert report.hit_rate(0.02) == 0.0
    with pytest.raises(ParameterError):
        HintReport({}, 0.0, 0.0).hit_rate()


def test_discriminator_accuracy_bounds(corpus):
    manifest = load_manifest(corpus)
    examples = [load_example(manifest, r.example_id) for r in manifest.records]
    g_cfg = NetConfig(in_channels=4, out_channels=3, head="full_res", depth=2,
                      base_features=4, feature_cap=8)
    gw = init_weights(g_cfg, seed=0)
    dw = init_weights(default_disc_net(g_cfg), seed=1, side=64)
    acc = discriminator_accuracy(examples, gw, dw)
    assert 0.0 <= acc <= 1.0
    # an exactly indifferent discriminator is always wrong under strict ties
    zero = type(dw)(dw.config, {n: np.zeros_like(t) for n, t in dw.tensors.items()},
                    dw.side)
    assert discriminator_accuracy(examples, gw, zero) == 0.0
    state = OptState()
    for _ in range(30):
        dw, _ = d_step(examples, gw, dw, state)
    trained = discriminator_accuracy(examples, gw, dw)
    assert trained >= 0.5
    with pytest.raises(ParameterError):
        discriminator_accuracy([], gw, dw)


def test_evaluate_corpus_plumbing(corpus, tmp_path):
    cfg = TrainConfig(manifest=str(corpus), steps=2, out_dir=str(tmp_path / "s"),
                      batch_size=4, side=64, seed=9)
    shader_net = NetConfig(in_channels=4, out_channels=3, head="full_res", depth=2,
                           base_features=4, feature_cap=8)
    colorist_net = NetConfig(in_channels=1, out_channels=3, head="block_grid",
                             depth=2, base_features=4, feature_cap=8)
    shader_ckpt, _ = train(cfg, which="shader", net=shader_net)
    cfg2 = TrainConfig(manifest=str(corpus), steps=2, out_dir=str(tmp_path / "c"),
                       batch_size=4, side=64, seed=9)
    colorist_ckpt, _ = train(cfg2, which="colorist", net=colorist_net)

    report = evaluate_corpus(corpus, shader_ckpt.weights, colorist_ckpt.weights)
    assert report.scenes == 4
    assert report.regions >= 4
    assert 0.0 <= report.hint_hit_rate <= 1.0
    assert report.mean_white_mse > 0
    assert report.auto_beats_white_rate is not None
    assert report.mean_auto_mse is not None
    assert len(report.per_scene) == 4
    assert {"example_id", "regions", "auto_mse"} <= set(report.per_scene[0])

    shader_only = evaluate_corpus(corpus, shader_ckpt.weights, limit=2)
    assert shader_only.scenes == 2
    assert shader_only.auto_beats_white_rate is None
    assert shader_only.mean_auto_mse is None

    doc = report.as_dict()
    assert doc["scenes"] == 4 and isinstance(doc["per_scene"], list)
