"""Procedural scenes: flat-filled shapes with dark outlines on white.

Every scene ships with a pixel-exact region map, so "did the model put the
right color in the right place" becomes a measurable quantity instead of a
judgment call. Shapes are confined to distinct quadrants so position never
hints at hue; hue instead follows the shape's silhouette class (ellipse,
quad, star), with a per-shape chance of defecting to an unused palette entry.
Color is therefore mostly learnable from local geometry — but never fully,
so models must actually read color hints to resolve the defectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, TandemPaintError
from .pngio import png_decode, png_encode
from .prep import (
    BlockParams,
    DatasetManifest,
    DegradeParams,
    ManifestRecord,
    build_example,
    example_seed,
    params_digest,
    save_manifest,
    write_example,
)
from .raster import Raster, Rgb

STROKE_VALUE = 0.05  # stroke intensity, well under the 0.15 "dark" bound
SUPERSAMPLE = 4

# entries 0-2 are owned by the ellipse/quad/star classes respectively; entry 3
# only appears when a shape defects from its class color. Mutual distances
# stay >= 0.28 even after +/-0.05 jitter, and luma stays >= 0.5 so stroke ink
# contrasts hard enough for edge detection on the fill side of every stroke
_PALETTE = (
    Rgb(0.95, 0.40, 0.40),
    Rgb(0.40, 0.85, 0.40),
    Rgb(0.45, 0.60, 0.95),
    Rgb(0.88, 0.82, 0.25),
)

_DEFECT_RATE = 0.35  # chance a shape abandons its class color


@dataclass(frozen=True)
class Shape:
    kind: str  # "ellipse" or "polygon"
    fill: Rgb
    center: tuple[float, float]
    radii: tuple[float, float] | None = None
    vertices: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("ellipse", "polygon"):
            raise ParameterError(f"unknown shape kind {self.kind!r}")
        if self.kind == "ellipse" and self.radii is None:
            raise ParameterError("ellipse needs radii")
        if self.kind == "polygon" and (self.vertices is None or len(self.vertices) < 3):
            raise ParameterError("polygon needs >= 3 vertices")

    def bounds(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the filled geometry."""
        if self.kind == "ellipse":
            cx, cy = self.center
            rx, ry = self.radii
            return (cx - rx, cy - ry, cx + rx, cy + ry)
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True)
class SceneSpec:
    side: int
    shapes: tuple[Shape, ...]
    stroke_width: float
    seed: int

    def __post_init__(self):
        if not 2 <= len(self.shapes) <= 6:
            raise ParameterError(f"scene needs 2..6 shapes, got {len(self.shapes)}")
        if not 2.0 <= self.stroke_width <= 4.0:
            raise ParameterError(f"stroke width {self.stroke_width} outside [2, 4]")
        fills = [s.fill.as_array() for s in self.shapes]
        for i in range(len(fills)):
            for j in range(i + 1, len(fills)):
                d = float(np.linalg.norm(fills[i] - fills[j]))
                if d < 0.25:
                    raise ParameterError(
                        f"fills of shapes {i} and {j} too similar (distance {d:.3f})"
                    )
        half = self.stroke_width / 2.0
        for i, s in enumerate(self.shapes):
            x0, y0, x1, y1 = s.bounds()
            if x0 - half < 0 or y0 - half < 0 or x1 + half > self.side or y1 + half > self.side:
                raise ParameterError(f"shape {i} (plus stroke) exceeds the canvas")


@dataclass(frozen=True)
class RegionMap:
    """Integer region labels (0 = background) with ground-truth fill colors.

    ``stroke_coverage``, when present, is the renderer's per-pixel fraction
    of stroke ink — the reference mask that edge detection is judged against.
    """

    labels: np.ndarray
    fills: dict[int, Rgb]
    stroke_coverage: np.ndarray | None = None

    def __post_init__(self):
        lab = self.labels
        if lab.ndim != 2 or not np.issubdtype(lab.dtype, np.integer):
            raise ParameterError("labels must be a 2-D integer array")
        lab.flags.writeable = False
        ids, counts = np.unique(lab, return_counts=True)
        for rid, count in zip(ids, counts):
            if rid == 0:
                continue
            if int(rid) not in self.fills:
                raise ParameterError(f"region {rid} has no recorded fill color")
            if count < 100:
                raise ParameterError(f"region {rid} has only {count} px (need >= 100)")

    def region_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]


def _ellipse_sdf(px, py, cx, cy, rx, ry):
    nx = (px - cx) / rx
    ny = (py - cy) / ry
    f = np.hypot(nx, ny)
    grad = np.hypot(nx / rx, ny / ry)
    d = (f - 1.0) * f / np.maximum(grad, 1e-12)
    # the estimate degenerates at the center; any large negative value works
    return np.where(f < 1e-6, -min(rx, ry), d)


def _polygon_sdf(px, py, vertices):
    inside = np.zeros(px.shape, dtype=bool)
    dist2 = np.full(px.shape, np.inf)
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        seg2 = ex * ex + ey * ey
        t = np.clip(((px - x1) * ex + (py - y1) * ey) / seg2, 0.0, 1.0)
        dx = px - (x1 + t * ex)
        dy = py - (y1 + t * ey)
        dist2 = np.minimum(dist2, dx * dx + dy * dy)
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (py - y1) * ex / ey
        inside ^= crosses & (px < xint)
    d = np.sqrt(dist2)
    return np.where(inside, -d, d)


def _shape_sdf(shape: Shape, px, py):
    cx, cy = shape.center
    if shape.kind == "ellipse":
        rx, ry = shape.radii
        return _ellipse_sdf(px, py, cx, cy, rx, ry)
    return _polygon_sdf(px, py, shape.vertices)


def render_scene(spec: SceneSpec) -> tuple[Raster, RegionMap]:
    """Supersampled flat-shading render with exact label bookkeeping.

    A base pixel gets a region id only when every subsample agrees on it, so
    labeled pixels are strictly interior; anti-aliased boundary pixels stay
    id 0.
    """
    ss = SUPERSAMPLE
    grid = spec.side * ss
    coords = (np.arange(grid, dtype=np.float64) + 0.5) / ss
    px, py = np.meshgrid(coords, coords)

    canvas = np.ones((grid, grid, 3), dtype=np.float64)
    labels = np.zeros((grid, grid), dtype=np.int32)
    stroke = np.zeros((grid, grid), dtype=bool)
    half = spec.stroke_width / 2.0

    for idx, shape in enumerate(spec.shapes, start=1):
        d = _shape_sdf(shape, px, py)
        fill_m = d <= -half
        stroke_m = np.abs(d) <= half
        canvas[fill_m] = shape.fill.as_array().astype(np.float64)
        canvas[stroke_m] = STROKE_VALUE
        labels[fill_m] = idx
        labels[stroke_m] = 0
        stroke[fill_m] = False
        stroke[stroke_m] = True

    side = spec.side
    img = canvas.reshape(side, ss, side, ss, 3).mean(axis=(1, 3))
    target = Raster.from_array(np.clip(img, 0.0, 1.0).astype(np.float32), copy=False)

    lab4 = labels.reshape(side, ss, side, ss)
    first = lab4[:, 0, :, 0]
    uniform = np.all(lab4 == first[:, None, :, None], axis=(1, 3))
    final_labels = np.where(uniform, first, 0).astype(np.int32)
    coverage = stroke.reshape(side, ss, side, ss).mean(axis=(1, 3)).astype(np.float32)

    # regions that eroded below the 100 px floor are demoted to background;
    # generate_scene treats the shrunken shape count as a layout rejection
    ids, counts = np.unique(final_labels, return_counts=True)
    for rid, count in zip(ids, counts):
        if rid != 0 and count < 100:
            final_labels[final_labels == rid] = 0

    fills = {i: s.fill for i, s in enumerate(spec.shapes, start=1)}
    fills = {i: f for i, f in fills.items() if np.any(final_labels == i)}
    regions = RegionMap(labels=final_labels, fills=fills, stroke_coverage=coverage)
    return target, regions


def _class_fills(classes: np.ndarray, rng: np.random.Generator) -> list[Rgb]:
    """Class-owned palette entries, with defectors drawing from unused ones.

    Loyal shapes keep their class color; defectors draw without replacement
    from whatever entries no loyal shape holds, so fills stay pairwise
    distinct within the scene.
    """
    loyal = rng.random(len(classes)) >= _DEFECT_RATE
    held = {int(c) for c, keep in zip(classes, loyal) if keep}
    pool = [i for i in range(len(_PALETTE)) if i not in held]
    fills = []
    for c, keep in zip(classes, loyal):
        if keep:
            entry = int(c)
        else:
            # a defector must actually change color, or class priors alone
            # would explain most scenes
            choices = [e for e in pool if e != int(c)]
            entry = int(choices[rng.integers(len(choices))])
            pool.remove(entry)
        base = _PALETTE[entry].as_array().astype(np.float64)
        fill = np.clip(base + rng.uniform(-0.05, 0.05, size=3), 0.0, 1.0)
        fills.append(Rgb(float(fill[0]), float(fill[1]), float(fill[2])))
    return fills


def sample_scene_spec(side: int, rng: np.random.Generator, seed: int) -> SceneSpec:
    n_shapes = int(rng.integers(2, 4))
    classes = rng.permutation(3)[:n_shapes]
    quadrants = rng.permutation(4)[:n_shapes]
    fills = _class_fills(classes, rng)
    # widths near 3 px balance two failure modes: thinner strokes leave the
    # detector no margin at stroke centers, much wider ones grow flat cores
    width = float(rng.uniform(3.0, 3.4))
    margin = width / 2.0 + 2.0

    # per-class radius floors keep eroded interiors above the region size
    # floor: the stroke band eats deeper into spiky silhouettes than round ones
    radius_range = {0: (0.15, 0.19), 1: (0.16, 0.19), 2: (0.175, 0.19)}

    shapes = []
    for cls, q, color in zip(classes, quadrants, fills):
        qx = (q % 2) * side / 2.0
        qy = (q // 2) * side / 2.0
        r_lo, r_hi = radius_range[int(cls)]
        radius = float(rng.uniform(r_lo, r_hi)) * side
        lo, hi = radius + margin, side / 2.0 - radius - margin
        cx = qx + float(rng.uniform(lo, max(lo + 1e-6, hi)))
        cy = qy + float(rng.uniform(lo, max(lo + 1e-6, hi)))

        if cls == 0:  # ellipse: smooth closed curve
            rx = radius
            ry = radius * float(rng.uniform(0.80, 1.0))
            if rng.random() < 0.5:
                rx, ry = ry, rx
            shapes.append(Shape("ellipse", color, (cx, cy), radii=(rx, ry)))
        elif cls == 1:  # quad: four straight edges
            offsets = rng.uniform(0.40, 0.60, size=4)
            angles = 2.0 * np.pi * (np.arange(4) + offsets) / 4 + rng.uniform(0, 2 * np.pi)
            verts = tuple(
                (float(cx + radius * np.cos(a)), float(cy + radius * np.sin(a)))
                for a in angles
            )
            shapes.append(Shape("polygon", color, (cx, cy), vertices=verts))
        else:  # star: concave five-point silhouette
            inner = radius * float(rng.uniform(0.56, 0.64))
            angles = 2.0 * np.pi * np.arange(10) / 10 + rng.uniform(0, 2 * np.pi)
            radii = np.where(np.arange(10) % 2 == 0, radius, inner)
            verts = tuple(
                (float(cx + r * np.cos(a)), float(cy + r * np.sin(a)))
                for r, a in zip(radii, angles)
            )
            shapes.append(Shape("polygon", color, (cx, cy), vertices=verts))

    return SceneSpec(side=side, shapes=tuple(shapes), stroke_width=width, seed=seed)


def generate_scene(side: int, seed: int) -> tuple[Raster, RegionMap]:
    """Deterministic scene draw; resamples until layout constraints hold."""
    if side < 64:
        raise ParameterError(f"scene side must be >= 64, got {side}")
    rng = np.random.default_rng(seed)
    for _ in range(64):
        spec = sample_scene_spec(side, rng, seed)
        target, regions = render_scene(spec)
        bg_fraction = float((regions.labels == 0).mean())
        if not 0.3 <= bg_fraction <= 0.95:
            continue
        if len(regions.fills) != len(spec.shapes):
            continue  # a region collapsed below the size floor
        return target, regions
    raise TandemPaintError(f"no valid scene layout found for seed {seed}")


def default_degrade_for_side(side: int) -> DegradeParams:
    """Patch dropout rescaled so the whitening rate matches the 256 default."""
    p = max(2, math.floor(10 * side / 256 + 0.5))
    positions = (side - p + 1) ** 2
    per_patch = (p * p) / positions
    n = round(math.log(1.0 - 0.9624) / math.log(1.0 - per_patch))
    return DegradeParams(patch_size=p, n_patches=n, blur_sigma=10.0)


def region_map_paths(root: Path, example_id: str) -> dict[str, Path]:
    return {
        "png": root / f"{example_id}_region.png",
        "json": root / f"{example_id}_region.json",
    }


def save_region_map(out_dir: Path, example_id: str, regions: RegionMap) -> None:
    paths = region_map_paths(Path(out_dir), example_id)
    encoded = Raster.from_array((regions.labels / 65535.0).astype(np.float32))
    paths["png"].write_bytes(png_encode(encoded, bit_depth=16))
    table = {str(i): [c.r, c.g, c.b] for i, c in sorted(regions.fills.items())}
    paths["json"].write_text(json.dumps({"fills": table}, indent=1, sort_keys=True))


def load_region_map(root: Path, example_id: str) -> RegionMap:
    paths = region_map_paths(Path(root), example_id)
    raster = png_decode(paths["png"].read_bytes())
    labels = np.rint(raster.pixels[:, :, 0] * 65535.0).astype(np.int32)
    doc = json.loads(paths["json"].read_text())
    fills = {int(k): Rgb(v[0], v[1], v[2]) for k, v in doc["fills"].items()}
    return RegionMap(labels=labels, fills=fills)


def generate_corpus(
    n: int,
    side: int,
    master_seed: int,
    out_dir: Path,
    degrade: DegradeParams | None = None,
    blocks: BlockParams | None = None,
) -> DatasetManifest:
    """Render n scenes and run the full degradation pipeline on each."""
    if n < 1:
        raise ParameterError(f"corpus size must be >= 1, got {n}")
    if degrade is None:
        degrade = default_degrade_for_side(side)
    if blocks is None:
        blocks = BlockParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    digest = params_digest(degrade, blocks, side)
    records = []
    for i in range(n):
        name = f"scene_{i:05d}"
        seed = example_seed(master_seed, name)
        target, regions = generate_scene(side, seed)
        ex = build_example(target, degrade, blocks, seed)
        example_id = f"{i:05d}"
        write_example(out_dir, example_id, ex)
        save_region_map(out_dir, example_id, regions)
        records.append(
            ManifestRecord(
                example_id=example_id,
                source=f"synth:{name}",
                seed=seed,
                params_digest=digest,
            )
        )
    manifest = DatasetManifest(
        side=side,
        master_seed=master_seed,
        degrade=degrade,
        blocks=blocks,
        params_digest=digest,
        records=records,
        root=out_dir,
    )
    save_manifest(manifest, out_dir)
    return manifest
