"""Turns finished artwork into training triples.

The degradation here is the whole trick: random patches of the color scheme
are whitened (dropout over regions, not pixels, since neighboring pixels are
correlated) and the result heavily blurred, so the shading network learns to
work from sparse, messy color information. The block grid is the 16x-reduced
mean-color image the color-prediction network regresses toward.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetEmptyError, DatasetError, ParameterError, TandemPaintError
from .pngio import png_decode, png_encode
from .raster import Raster, Rgb, extract_outline, gaussian_blur, resize_cover_crop

logger = logging.getLogger(__name__)

# blur_sigma in DegradeParams is expressed at this training side; it scales
# linearly with min(H, W) so degradation looks the same at other sizes.
SCALE_REFERENCE_SIDE = 256

MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class DegradeParams:
    """Patch-dropout and blur parameters for color-scheme degradation."""

    patch_size: int = 10
    n_patches: int = 2000
    blur_sigma: float = 10.0
    fill: Rgb = field(default_factory=lambda: Rgb(1.0, 1.0, 1.0))

    def __post_init__(self):
        if self.patch_size < 1:
            raise ParameterError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.n_patches < 0:
            raise ParameterError(f"n_patches must be >= 0, got {self.n_patches}")
        if self.blur_sigma < 0:
            raise ParameterError(f"blur_sigma must be >= 0, got {self.blur_sigma}")


@dataclass(frozen=True)
class DegradeStats:
    """Derived whitening probability for interior pixels."""

    q_interior: float

    def __post_init__(self):
        if not 0.0 <= self.q_interior <= 1.0:
            raise ParameterError(f"q_interior must be in [0, 1], got {self.q_interior}")


@dataclass(frozen=True)
class BlockParams:
    block_size: int = 16

    def __post_init__(self):
        if self.block_size < 1:
            raise ParameterError(f"block_size must be >= 1, got {self.block_size}")


@dataclass(frozen=True)
class TrainingExample:
    """One (outline, degraded scheme, target, block grid) training record."""

    outline: Raster
    scheme: Raster
    target: Raster
    block_target: Raster
    seed: int

    def __post_init__(self):
        dims = {(r.height, r.width) for r in (self.outline, self.scheme, self.target)}
        if len(dims) != 1:
            raise ParameterError(f"outline/scheme/target dimensions differ: {dims}")
        if self.outline.channels != 1 or self.scheme.channels != 3 or self.target.channels != 3:
            raise ParameterError("expected 1-channel outline and 3-channel scheme/target")
        h, w = self.target.height, self.target.width
        bh, bw = self.block_target.height, self.block_target.width
        if bh * (h // bh) != h or bw * (w // bw) != w:
            raise ParameterError(
                f"block grid {bh}x{bw} does not evenly tile target {h}x{w}"
            )


@dataclass(frozen=True)
class ManifestRecord:
    example_id: str
    source: str
    seed: int
    params_digest: str


@dataclass
class DatasetManifest:
    side: int
    master_seed: int
    degrade: DegradeParams
    blocks: BlockParams
    params_digest: str
    records: list[ManifestRecord]
    root: Path | None = None

    def __post_init__(self):
        ids = [r.example_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ParameterError("manifest example ids are not unique")
        for r in self.records:
            if r.params_digest != self.params_digest:
                raise ParameterError(
                    f"record {r.example_id} was built under different params"
                )


def effective_blur_sigma(params: DegradeParams, h: int, w: int) -> float:
    return params.blur_sigma * min(h, w) / SCALE_REFERENCE_SIDE


def params_digest(degrade: DegradeParams, blocks: BlockParams, side: int) -> str:
    doc = {
        "patch_size": degrade.patch_size,
        "n_patches": degrade.n_patches,
        "blur_sigma": degrade.blur_sigma,
        "fill": [degrade.fill.r, degrade.fill.g, degrade.fill.b],
        "block_size": blocks.block_size,
        "side": side,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def example_seed(master_seed: int, name: str) -> int:
    """Per-example seed derived from the master seed and a source name."""
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(8, "little", signed=False))
    h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def _patch_mask(h: int, w: int, params: DegradeParams, seed: int) -> np.ndarray:
    """Boolean mask of pixels whitened by the seeded patch draw (pre-blur)."""
    p = params.patch_size
    if h < p or w < p:
        raise ParameterError(
            f"image {h}x{w} is smaller than the {p}x{p} dropout patch"
        )
    mask = np.zeros((h, w), dtype=bool)
    if params.n_patches == 0:
        return mask
    rng = np.random.default_rng(seed)
    tops = rng.integers(0, [h - p + 1, w - p + 1], size=(params.n_patches, 2))
    for r, c in tops:
        mask[r : r + p, c : c + p] = True
    return mask


def degrade_scheme(target: Raster, params: DegradeParams, seed: int) -> Raster:
    """Whiten random patches of the target, then blur.

    Patch top-left corners are uniform over the valid grid; the whole draw is
    deterministic in ``seed``. The blur sigma is rescaled to the image size.
    """
    if target.channels != 3:
        raise ParameterError(f"scheme degradation needs 3 channels, got {target.channels}")
    mask = _patch_mask(target.height, target.width, params, seed)
    arr = target.pixels.copy()
    arr[mask] = params.fill.as_array()
    degraded = Raster.from_array(arr, copy=False)
    sigma = effective_blur_sigma(params, target.height, target.width)
    return gaussian_blur(degraded, sigma)


def removal_probability(params: DegradeParams, h: int, w: int) -> DegradeStats:
    """Exact whitening probability for a pixel at least P-1 from every border.

    Patches are independent draws, so a pixel survives all N of them with
    probability (1 - P^2 / positions)^N.
    """
    p = params.patch_size
    if h < p or w < p:
        raise ParameterError(f"image {h}x{w} is smaller than the {p}x{p} patch")
    positions = (h - p + 1) * (w - p + 1)
    per_patch = min(1.0, (p * p) / positions)
    q = 1.0 - (1.0 - per_patch) ** params.n_patches
    return DegradeStats(q_interior=float(min(1.0, max(0.0, q))))


def rescale_for_inference(scheme: Raster, stats: DegradeStats) -> Raster:
    """Blend every pixel toward white by the training-time whitening rate.

    v -> q + (1 - q) v matches the expected value of a patch-dropped pixel,
    so clean hint images land in the distribution the network trained on.
    Callers apply the blur separately.
    """
    if scheme.channels != 3:
        raise ParameterError(f"rescale needs 3 channels, got {scheme.channels}")
    q = np.float32(stats.q_interior)
    # v + q(1-v) == q + (1-q)v, but keeps v=1 -> 1 and v=0 -> q exact in f32.
    out = scheme.pixels + q * (np.float32(1.0) - scheme.pixels)
    return Raster.from_array(np.clip(out, 0.0, 1.0), copy=False)


def block_grid(img: Raster, params: BlockParams) -> Raster:
    """Mean color of each block_size x block_size cell."""
    if img.channels != 3:
        raise ParameterError(f"block grid needs 3 channels, got {img.channels}")
    b = params.block_size
    if img.height % b or img.width % b:
        raise ParameterError(
            f"image {img.height}x{img.width} dimensions must be multiples of {b}"
        )
    data = img.pixels.astype(np.float64)
    grid = data.reshape(img.height // b, b, img.width // b, b, 3).mean(axis=(1, 3))
    return Raster.from_array(grid.astype(np.float32), copy=False)


def build_example(
    artwork: Raster,
    degrade: DegradeParams,
    blocks: BlockParams,
    seed: int,
) -> TrainingExample:
    """Derive the full training record from one finished piece of artwork.

    The block target comes from the blurred but patch-free artwork: the
    color-prediction network should regress toward clean color statistics,
    not toward dropout noise.
    """
    if artwork.channels != 3:
        raise ParameterError(f"artwork must have 3 channels, got {artwork.channels}")
    outline = extract_outline(artwork)
    scheme = degrade_scheme(artwork, degrade, seed)
    sigma = effective_blur_sigma(degrade, artwork.height, artwork.width)
    block_target = block_grid(gaussian_blur(artwork, sigma), blocks)
    return TrainingExample(
        outline=outline,
        scheme=scheme,
        target=artwork,
        block_target=block_target,
        seed=seed,
    )


def _ensure_rgb(img: Raster) -> Raster:
    if img.channels == 3:
        return img
    if img.channels == 1:
        return Raster.from_array(np.repeat(img.pixels, 3, axis=2), copy=False)
    # RGBA: composite over white.
    rgb = img.pixels[:, :, :3]
    a = img.pixels[:, :, 3:4]
    return Raster.from_array(rgb * a + (1.0 - a), copy=False)


def example_paths(root: Path, example_id: str) -> dict[str, Path]:
    return {
        "outline": root / f"{example_id}_outline.png",
        "scheme": root / f"{example_id}_scheme.png",
        "target": root / f"{example_id}_target.png",
        "blocks": root / f"{example_id}_blocks.png",
    }


def write_example(out_dir: Path, example_id: str, ex: TrainingExample) -> None:
    paths = example_paths(out_dir, example_id)
    paths["outline"].write_bytes(png_encode(ex.outline))
    paths["scheme"].write_bytes(png_encode(ex.scheme))
    paths["target"].write_bytes(png_encode(ex.target))
    paths["blocks"].write_bytes(png_encode(ex.block_target))


def load_example(manifest: DatasetManifest, example_id: str) -> TrainingExample:
    """Read one training triple back from a dataset directory."""
    if manifest.root is None:
        raise ParameterError("manifest carries no root directory")
    by_id = {r.example_id: r for r in manifest.records}
    if example_id not in by_id:
        raise DatasetError(f"example {example_id!r} is not in the manifest")
    paths = example_paths(manifest.root, example_id)
    rasters = {}
    for part, path in paths.items():
        if not path.exists():
            raise DatasetError(f"missing {part} image for example {example_id}: {path}")
        rasters[part] = png_decode(path.read_bytes())
    return TrainingExample(
        outline=rasters["outline"],
        scheme=rasters["scheme"],
        target=rasters["target"],
        block_target=rasters["blocks"],
        seed=by_id[example_id].seed,
    )


def save_manifest(manifest: DatasetManifest, out_dir: Path) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    header = {
        "kind": "header",
        "side": manifest.side,
        "master_seed": manifest.master_seed,
        "degrade": {
            "patch_size": manifest.degrade.patch_size,
            "n_patches": manifest.degrade.n_patches,
            "blur_sigma": manifest.degrade.blur_sigma,
            "fill": [manifest.degrade.fill.r, manifest.degrade.fill.g, manifest.degrade.fill.b],
        },
        "blocks": {"block_size": manifest.blocks.block_size},
        "params_digest": manifest.params_digest,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for r in manifest.records:
        lines.append(
            json.dumps(
                {
                    "kind": "record",
                    "id": r.example_id,
                    "source": r.source,
                    "seed": r.seed,
                    "params_digest": r.params_digest,
                },
                sort_keys=True,
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def load_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DatasetEmptyError(f"no manifest at {path}")
    header = None
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        if doc.get("kind") == "header":
            header = doc
        elif doc.get("kind") == "record":
            records.append(
                ManifestRecord(
                    example_id=doc["id"],
                    source=doc["source"],
                    seed=doc["seed"],
                    params_digest=doc["params_digest"],
                )
            )
    if header is None:
        raise TandemPaintError(f"manifest {path} has no header line")
    fill = header["degrade"]["fill"]
    return DatasetManifest(
        side=header["side"],
        master_seed=header["master_seed"],
        degrade=DegradeParams(
            patch_size=header["degrade"]["patch_size"],
            n_patches=header["degrade"]["n_patches"],
            blur_sigma=header["degrade"]["blur_sigma"],
            fill=Rgb(fill[0], fill[1], fill[2]),
        ),
        blocks=BlockParams(block_size=header["blocks"]["block_size"]),
        params_digest=header["params_digest"],
        records=records,
        root=path.parent,
    )


def build_dataset(
    src_dir: Path,
    out_dir: Path,
    degrade: DegradeParams,
    blocks: BlockParams,
    side: int,
    master_seed: int,
) -> DatasetManifest:
    """Process every decodable PNG under src_dir into training records.

    Undecodable files are skipped with a logged warning. Output is byte-for-
    byte reproducible for a fixed master seed: per-example seeds depend only
    on (master_seed, file name) and the manifest carries no timestamps.
    """
    src_dir = Path(src_dir)
    out_dir = Path(out_dir)
    files = sorted(p for p in src_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise DatasetEmptyError(f"no .png files found in {src_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    digest = params_digest(degrade, blocks, side)
    records = []
    for path in files:
        try:
            img = png_decode(path.read_bytes())
        except TandemPaintError as exc:
            logger.warning("skipping undecodable file %s: %s", path, exc)
            continue
        artwork = resize_cover_crop(_ensure_rgb(img), side)
        seed = example_seed(master_seed, path.name)
        ex = build_example(artwork, degrade, blocks, seed)
        example_id = f"{len(records):05d}"
        write_example(out_dir, example_id, ex)
        records.append(
            ManifestRecord(
                example_id=example_id,
                source=str(path),
                seed=seed,
                params_digest=digest,
            )
        )
    if not records:
        raise DatasetEmptyError(f"no decodable PNGs in {src_dir}")
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
