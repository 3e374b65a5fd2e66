"""Reproduce the desk-scale benchmark runs end to end.

Builds the 512-scene training corpus and the 32-scene held-out corpus at
64x64, trains the shading network, the color-prediction network, and a
direct outline-to-image baseline under identical budgets, then reports the
hint-following and tandem-vs-direct numbers the acceptance suite gates on.
Everything is seeded; two runs of this script produce identical results.

Usage:
    python3 scripts/reproduce.py --out runs/benchmark
    python3 scripts/reproduce.py --out runs/benchmark --steps 2000
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

from tandempaint.evaluate import evaluate_corpus, mse, white_baseline_mse
from tandempaint.inference import colorize_auto
from tandempaint.models import (
    Discriminator,
    Generator,
    NetConfig,
    extract_weights,
    init_weights,
    load_weights_into,
)
from tandempaint.prep import DegradeParams, load_example, load_manifest
from tandempaint.raster import Raster
from tandempaint.synth import generate_corpus
from tandempaint.training import TrainConfig, _bce, train

SIDE = 64
DEGRADE = DegradeParams(patch_size=3, n_patches=591, blur_sigma=10.0)
SHADER_NET = NetConfig(in_channels=4, out_channels=3, head="full_res",
                       depth=3, base_features=16, feature_cap=128)
COLORIST_NET = NetConfig(in_channels=1, out_channels=3, head="block_grid",
                         depth=3, base_features=16, feature_cap=128)
DIRECT_NET = NetConfig(in_channels=1, out_channels=3, head="full_res",
                       depth=3, base_features=16, feature_cap=128)


def build_corpora(out: Path) -> tuple[Path, Path]:
    train_dir, held_dir = out / "train", out / "held"
    if not (train_dir / "manifest.jsonl").exists():
        generate_corpus(n=512, side=SIDE, master_seed=101, out_dir=train_dir,
                        degrade=DEGRADE)
    if not (held_dir / "manifest.jsonl").exists():
        generate_corpus(n=32, side=SIDE, master_seed=202, out_dir=held_dir,
                        degrade=DEGRADE)
    return train_dir, held_dir


def train_direct(train_dir: Path, steps: int, batch_size: int, lr: float,
                 seed: int):
    """Outline-to-image baseline trained with the same loop semantics as the
    shading network, minus the scheme input."""
    manifest = load_manifest(train_dir)
    examples = [load_example(manifest, r.example_id) for r in manifest.records]
    g = Generator(DIRECT_NET)
    load_weights_into(g, init_weights(DIRECT_NET, seed=seed))
    d_cfg = NetConfig(in_channels=1 + DIRECT_NET.out_channels, out_channels=1,
                      head="scalar", depth=DIRECT_NET.depth,
                      base_features=DIRECT_NET.base_features,
                      feature_cap=DIRECT_NET.feature_cap)
    d = Discriminator(d_cfg, manifest.side)
    load_weights_into(d, init_weights(d_cfg, seed=seed + 1,
                                      side=manifest.side))
    opt_g = torch.optim.Adam(g.parameters(), lr=lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(d.parameters(), lr=lr, betas=(0.5, 0.999))
    rng = np.random.default_rng(seed)
    order: list[int] = []
    for _ in range(steps):
        if len(order) < batch_size:
            order = list(rng.permutation(len(examples)))
        idx = [order.pop(0) for _ in range(batch_size)]
        xo = torch.from_numpy(np.stack(
            [examples[i].outline.pixels.transpose(2, 0, 1).copy()
             for i in idx]))
        y = torch.from_numpy(np.stack(
            [examples[i].target.pixels.transpose(2, 0, 1).copy()
             for i in idx]))
        with torch.no_grad():
            fake = g(xo)
        d_loss = 0.5 * (_bce(d(torch.cat([xo, y], 1)), True)
                        + _bce(d(torch.cat([xo, fake], 1)), False))
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()
        fake = g(xo)
        g_loss = (_bce(d(torch.cat([xo, fake], 1)), True)
                  + 100.0 * torch.mean((fake - y) ** 2))
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()
    return extract_weights(g, DIRECT_NET)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/benchmark",
                        help="working directory for corpora and checkpoints")
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--learning-rate", type=float, default=5e-4)
    args = parser.parse_args(argv)
    torch.set_num_threads(1)
    out = Path(args.out)

    t0 = time.perf_counter()
    train_dir, held_dir = build_corpora(out)
    print(f"corpora ready in {time.perf_counter() - t0:.0f}s", flush=True)

    t0 = time.perf_counter()
    cfg = TrainConfig(manifest=str(train_dir), steps=args.steps,
                      out_dir=str(out / "shader"), batch_size=args.batch_size,
                      side=SIDE, lambda_pix=100.0, adv_weight=1.0,
                      learning_rate=args.learning_rate, seed=11,
                      checkpoint_every=max(1, args.steps))
    shader_ckpt, shader_recs = train(cfg, which="shader", net=SHADER_NET)
    print(f"shader: {args.steps} steps in {time.perf_counter() - t0:.0f}s, "
          f"final pixel MSE {shader_recs[-1].g_pix_loss:.5f}", flush=True)

    t0 = time.perf_counter()
    cfg = TrainConfig(manifest=str(train_dir), steps=args.steps,
                      out_dir=str(out / "colorist"),
                      batch_size=args.batch_size, side=SIDE,
                      learning_rate=args.learning_rate, seed=12,
                      checkpoint_every=max(1, args.steps))
    colorist_ckpt, colorist_recs = train(cfg, which="colorist",
                                         net=COLORIST_NET)
    print(f"colorist: {args.steps} steps in {time.perf_counter() - t0:.0f}s, "
          f"final block MSE {colorist_recs[-1].colorist_loss:.5f}", flush=True)

    t0 = time.perf_counter()
    direct = train_direct(train_dir, args.steps, args.batch_size,
                          args.learning_rate, seed=13)
    print(f"direct baseline: {args.steps} steps in "
          f"{time.perf_counter() - t0:.0f}s", flush=True)

    report = evaluate_corpus(held_dir, shader_ckpt.weights,
                             colorist_ckpt.weights)
    gmod = Generator(DIRECT_NET)
    load_weights_into(gmod, direct)
    manifest = load_manifest(held_dir)
    direct_mses, white_mses = [], []
    for rec in manifest.records:
        ex = load_example(manifest, rec.example_id)
        xo = torch.from_numpy(
            ex.outline.pixels.transpose(2, 0, 1)[None].copy())
        with torch.no_grad():
            img = gmod(xo)[0].numpy().transpose(1, 2, 0)
        direct_mses.append(
            mse(Raster.from_array(np.clip(img, 0.0, 1.0)), ex.target))
        white_mses.append(white_baseline_mse(ex.target))
    direct_mean = float(np.mean(direct_mses))
    direct_wins = sum(1 for a, w in zip(direct_mses, white_mses) if a < w)

    summary = {
        "hint_hit_rate": report.hint_hit_rate,
        "mean_intra_region_std": report.mean_intra_region_std,
        "mean_inter_region_distance": report.mean_inter_region_distance,
        "tandem_auto_mse": report.mean_auto_mse,
        "direct_mse": direct_mean,
        "white_mse": report.mean_white_mse,
        "tandem_beats_white_rate": report.auto_beats_white_rate,
        "direct_beats_white": f"{direct_wins}/{len(direct_mses)}",
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
