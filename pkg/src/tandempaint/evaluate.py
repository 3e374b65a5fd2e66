"""Quality metrics for trained networks on the synthetic corpus.

The synthetic scenes come with ground-truth region maps, which makes the
qualitative promises checkable: place one correct hint per region, shade, and
measure how faithfully each region took its hint; compare automatic
colorization against the constant-white baseline; score the discriminator's
real/fake separation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import DatasetError, ParameterError, ShapeError
from .inference import colorize_auto, colorize_with_hints
from .models import Weights, discriminator_forward, shading_forward
from .prep import DatasetManifest, TrainingExample, load_example, load_manifest
from .raster import Raster
from .synth import RegionMap, load_region_map


def mse(a: Raster, b: Raster) -> float:
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(
            f"cannot compare {a.height}x{a.width}x{a.channels} with "
            f"{b.height}x{b.width}x{b.channels}"
        )
    return float(np.mean((a.pixels - b.pixels) ** 2))


def white_baseline_mse(target: Raster) -> float:
    """MSE of the constant-white canvas against a target image."""
    return float(np.mean((1.0 - target.pixels) ** 2))


def discriminator_accuracy(
    examples: list[TrainingExample],
    g_weights: Weights,
    d_weights: Weights,
) -> float:
    """Fraction of real/fake pairs the discriminator classifies correctly.

    Real targets should score above 1/2, generator outputs below; ties count
    as wrong on both sides.
    """
    if not examples:
        raise ParameterError("need at least one example to score")
    correct = 0
    for ex in examples:
        fake = shading_forward(ex.outline, ex.scheme, g_weights)
        p_real = discriminator_forward(ex.outline, ex.scheme, ex.target, d_weights)
        p_fake = discriminator_forward(ex.outline, ex.scheme, fake, d_weights)
        correct += int(p_real > 0.5) + int(p_fake < 0.5)
    return correct / (2 * len(examples))


def region_hints(regions: RegionMap, radius: int | None = None) -> Raster:
    """One correct hint disc per region, placed at its most interior point.

    The disc is centered where the distance to the region boundary peaks and
    colored with the region's ground-truth fill; alpha is binary. By default
    the disc fills the region's inscribed circle, so the hint keeps a usable
    amplitude after the scheme blur at any canvas size; an explicit
    ``radius`` caps it at a fixed size instead.
    """
    if radius is not None and radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    h, w = regions.labels.shape
    hints = np.ones((h, w, 4), np.float32)
    hints[:, :, 3] = 0.0
    yy, xx = np.mgrid[0:h, 0:w]
    for rid in regions.region_ids():
        mask = regions.labels == rid
        dist = distance_transform_edt(mask)
        cy, cx = np.unravel_index(np.argmax(dist), dist.shape)
        r = max(1, int(dist[cy, cx]) - 1)
        if radius is not None:
            r = min(radius, r)
        disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        fill = regions.fills[rid].as_array()
        hints[disc, :3] = fill
        hints[disc, 3] = 1.0
    return Raster.from_array(hints)


@dataclass(frozen=True)
class HintReport:
    """Per-region adherence of a shaded image to its ground-truth hints."""

    region_mae: dict[int, float]
    intra_region_std: float
    inter_region_distance: float

    def hit_rate(self, threshold: float = 0.15) -> float:
        if not self.region_mae:
            raise ParameterError("report covers no regions")
        hits = sum(1 for v in self.region_mae.values() if v <= threshold)
        return hits / len(self.region_mae)


def hint_adherence(output: Raster, regions: RegionMap) -> HintReport:
    """Score how well each region of a shaded image took its intended color.

    Per region: mean absolute error between the region's mean output color
    and the ground-truth fill, averaged over channels. Also reports the mean
    per-region color standard deviation and the mean Euclidean distance
    between region mean colors over all region pairs.
    """
    if output.channels != 3:
        raise ShapeError(f"output must be RGB, got {output.channels} channels")
    if output.pixels.shape[:2] != regions.labels.shape:
        raise ShapeError(
            f"output is {output.height}x{output.width}, region map is "
            f"{regions.labels.shape[0]}x{regions.labels.shape[1]}"
        )
    ids = regions.region_ids()
    if not ids:
        raise DatasetError("region map has no foreground regions")
    maes: dict[int, float] = {}
    stds = []
    means = {}
    for rid in ids:
        block = output.pixels[regions.labels == rid].astype(np.float64)
        mean = block.mean(axis=0)
        means[rid] = mean
        maes[rid] = float(np.mean(np.abs(mean - regions.fills[rid].as_array())))
        stds.append(float(np.mean(block.std(axis=0))))
    if len(ids) >= 2:
        inter = float(
            np.mean(
                [np.linalg.norm(means[a] - means[b]) for a, b in combinations(ids, 2)]
            )
        )
    else:
        inter = 0.0
    return HintReport(
        region_mae=maes,
        intra_region_std=float(np.mean(stds)),
        inter_region_distance=inter,
    )


@dataclass(frozen=True)
class CorpusReport:
    """Aggregate metrics for a trained pair over a corpus directory."""

    scenes: int
    regions: int
    hint_hit_rate: float
    mean_intra_region_std: float
    mean_inter_region_distance: float
    auto_beats_white_rate: float | None
    mean_auto_mse: float | None
    mean_white_mse: float
    per_scene: list[dict] = field(repr=False, default_factory=list)

    def as_dict(self) -> dict:
        doc = {
            "scenes": self.scenes,
            "regions": self.regions,
            "hint_hit_rate": self.hint_hit_rate,
            "mean_intra_region_std": self.mean_intra_region_std,
            "mean_inter_region_distance": self.mean_inter_region_distance,
            "auto_beats_white_rate": self.auto_beats_white_rate,
            "mean_auto_mse": self.mean_auto_mse,
            "mean_white_mse": self.mean_white_mse,
            "per_scene": self.per_scene,
        }
        return doc


def evaluate_corpus(
    root: Path,
    shader: Weights,
    colorist: Weights | None = None,
    limit: int | None = None,
    hint_threshold: float = 0.15,
    hint_radius: int | None = None,
) -> CorpusReport:
    """Run hint-following and auto-colorization metrics over a corpus.

    Every scene gets one correct hint per region (disc size per
    ``region_hints``); scenes are scored with ``hint_adherence``. When a
    colorist is supplied, automatic colorization is compared per-scene
    against the constant-white baseline.
    """
    root = Path(root)
    manifest: DatasetManifest = load_manifest(root)
    records = manifest.records[:limit] if limit else manifest.records
    if not records:
        raise DatasetError("manifest lists no examples")
    per_scene = []
    hits = 0
    total_regions = 0
    intra, inter = [], []
    auto_wins = 0
    auto_mses, white_mses = [], []
    for rec in records:
        ex = load_example(manifest, rec.example_id)
        regions = load_region_map(root, rec.example_id)
        hints = region_hints(regions, radius=hint_radius)
        shaded = colorize_with_hints(ex.outline, hints, shader, manifest.degrade)
        report = hint_adherence(shaded, regions)
        n = len(report.region_mae)
        scene_hits = sum(1 for v in report.region_mae.values() if v <= hint_threshold)
        hits += scene_hits
        total_regions += n
        intra.append(report.intra_region_std)
        inter.append(report.inter_region_distance)
        white = white_baseline_mse(ex.target)
        white_mses.append(white)
        doc = {
            "example_id": rec.example_id,
            "regions": n,
            "hint_hits": scene_hits,
            "intra_region_std": report.intra_region_std,
            "inter_region_distance": report.inter_region_distance,
            "white_mse": white,
        }
        if colorist is not None:
            auto = colorize_auto(ex.outline, colorist, shader)
            auto_err = mse(auto, ex.target)
            auto_mses.append(auto_err)
            auto_wins += int(auto_err < white)
            doc["auto_mse"] = auto_err
        per_scene.append(doc)
    return CorpusReport(
        scenes=len(records),
        regions=total_regions,
        hint_hit_rate=hits / total_regions,
        mean_intra_region_std=float(np.mean(intra)),
        mean_inter_region_distance=float(np.mean(inter)),
        auto_beats_white_rate=(
            auto_wins / len(records) if colorist is not None else None
        ),
        mean_auto_mse=float(np.mean(auto_mses)) if auto_mses else None,
        mean_white_mse=float(np.mean(white_mses)),
        per_scene=per_scene,
    )
