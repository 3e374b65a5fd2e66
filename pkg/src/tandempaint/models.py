"""Network architectures: shading generator, color predictor, discriminator.

All three share one encoder family: 5x5 convolutions with stride 2, feature
count doubling from a base of 64 up to a cap. The generator decodes back up
with stride-2 transpose convolutions and skip concatenation from the matching
encoder stage; the color predictor stops decoding at 1/16 resolution; the
discriminator flattens into a single fully-connected logit, which pins its
input to the training side while the other two stay fully convolutional.

Weight tensors use a (k, k, c_in, c_out) canonical layout independent of the
torch module layout, so the checkpoint format is framework-neutral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.special import erfinv
from torch import nn

from .errors import ParameterError, ShapeError
from .raster import Raster

_VALID_HEADS = ("full_res", "block_grid", "scalar")

# a +/-2 sigma truncated standard normal has this standard deviation; samples
# are divided by it so the *realized* std matches the requested one
_TRUNC_AT = 2.0
_TRUNC_SPAN = math.erf(_TRUNC_AT / math.sqrt(2.0))
_TRUNC_STD = math.sqrt(
    1.0
    - 2.0
    * _TRUNC_AT
    * (math.exp(-0.5 * _TRUNC_AT * _TRUNC_AT) / math.sqrt(2.0 * math.pi))
    / _TRUNC_SPAN
)

BLOCK_FACTOR = 16  # block-grid head output is input dims / 16


@dataclass(frozen=True)
class NetConfig:
    in_channels: int
    out_channels: int
    head: str
    depth: int = 4
    base_features: int = 64
    feature_cap: int = 512
    filter_size: int = 5
    stride: int = 2

    def __post_init__(self):
        if self.head not in _VALID_HEADS:
            raise ParameterError(f"head must be one of {_VALID_HEADS}, got {self.head!r}")
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if self.base_features < 1:
            raise ParameterError(f"base_features must be >= 1, got {self.base_features}")
        if self.feature_cap < self.base_features:
            raise ParameterError("feature_cap must be >= base_features")
        if self.filter_size % 2 != 1 or self.filter_size < 1:
            raise ParameterError(f"filter_size must be odd, got {self.filter_size}")
        if self.stride != 2:
            raise ParameterError(f"stride is fixed at 2, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ParameterError("channel counts must be >= 1")

    def features_at(self, stage: int) -> int:
        return min(self.base_features * 2**stage, self.feature_cap)

    def encoder_stages(self) -> int:
        # the block-grid head needs a total downsampling of 16 regardless of
        # the nominal depth, so shallow configs grow extra encoder stages
        if self.head == "block_grid":
            return max(self.depth, int(math.log2(BLOCK_FACTOR)))
        return self.depth

    def required_multiple(self) -> int:
        if self.head == "block_grid":
            return max(BLOCK_FACTOR, 2**self.depth)
        return 2**self.depth


@dataclass(frozen=True)
class StageShape:
    stage: int
    height: int
    width: int
    channels: int


@dataclass(frozen=True)
class LayerPlan:
    encoder: tuple[StageShape, ...]
    decoder: tuple[StageShape, ...]
    fc_in: int | None = None


def plan_shapes(cfg: NetConfig, h: int, w: int) -> LayerPlan:
    """Spatial/channel bookkeeping for every stage at a given input size."""
    multiple = cfg.required_multiple()
    if h % multiple or w % multiple:
        raise ShapeError(
            f"input {h}x{w} must have dimensions divisible by {multiple}"
        )
    encoder = []
    eh, ew = h, w
    for k in range(cfg.encoder_stages()):
        eh, ew = eh // 2, ew // 2
        encoder.append(StageShape(k, eh, ew, cfg.features_at(k)))

    decoder = []
    if cfg.head == "full_res":
        dh, dw = eh, ew
        for j in range(cfg.depth):
            dh, dw = dh * 2, dw * 2
            ch = cfg.features_at(cfg.depth - 2 - j) if j < cfg.depth - 1 else cfg.base_features
            decoder.append(StageShape(j, dh, dw, ch))
    elif cfg.head == "block_grid" and cfg.depth > 4:
        dh, dw = eh, ew
        for j in range(cfg.depth - 4):
            dh, dw = dh * 2, dw * 2
            decoder.append(StageShape(j, dh, dw, cfg.features_at(cfg.depth - 2 - j)))

    fc_in = None
    if cfg.head == "scalar":
        fc_in = cfg.features_at(cfg.depth - 1) * eh * ew
    return LayerPlan(encoder=tuple(encoder), decoder=tuple(decoder), fc_in=fc_in)


def _encoder_layer_channels(cfg: NetConfig) -> list[tuple[int, int]]:
    pairs = []
    prev = cfg.in_channels
    for k in range(cfg.encoder_stages()):
        out = cfg.features_at(k)
        pairs.append((prev, out))
        prev = out
    return pairs


def _decoder_layer_channels(cfg: NetConfig) -> list[tuple[int, int]]:
    if cfg.head == "scalar":
        return []
    if cfg.head == "block_grid":
        stages = max(0, cfg.depth - 4)
    else:
        stages = cfg.depth
    pairs = []
    prev = cfg.features_at(cfg.depth - 1)
    for j in range(stages):
        cin = prev if j == 0 else prev + cfg.features_at(cfg.depth - 1 - j)
        if cfg.head == "full_res" and j == stages - 1:
            cout = cfg.base_features
        else:
            cout = cfg.features_at(cfg.depth - 2 - j)
        pairs.append((cin, cout))
        prev = cout
    return pairs


def _head_in_channels(cfg: NetConfig) -> int:
    if cfg.head == "full_res":
        return cfg.base_features
    if cfg.head == "block_grid":
        if cfg.depth > 4:
            # decoder output concatenated with the matching encoder stage
            return 2 * cfg.features_at(3)
        return cfg.features_at(cfg.encoder_stages() - 1)
    raise ParameterError("scalar head has no projection layer")


@dataclass
class Weights:
    """Named float32 tensors in the canonical (k, k, c_in, c_out) layout."""

    config: NetConfig
    tensors: dict[str, np.ndarray]
    side: int | None = None  # scalar head only: the input size the FC fixes

    def __post_init__(self):
        for name, t in self.tensors.items():
            if not np.issubdtype(t.dtype, np.floating):
                raise ParameterError(f"tensor {name} is not floating point")
            if not np.all(np.isfinite(t)):
                raise ParameterError(f"tensor {name} contains non-finite values")


def _expected_shapes(cfg: NetConfig, side: int | None) -> dict[str, tuple]:
    k = cfg.filter_size
    shapes: dict[str, tuple] = {}
    for i, (cin, cout) in enumerate(_encoder_layer_channels(cfg)):
        shapes[f"encoder.{i}.weight"] = (k, k, cin, cout)
        shapes[f"encoder.{i}.bias"] = (cout,)
    for j, (cin, cout) in enumerate(_decoder_layer_channels(cfg)):
        shapes[f"decoder.{j}.weight"] = (k, k, cin, cout)
        shapes[f"decoder.{j}.bias"] = (cout,)
    if cfg.head == "scalar":
        if side is None:
            raise ParameterError("scalar head needs the training side to size its FC layer")
        plan = plan_shapes(cfg, side, side)
        shapes["fc.weight"] = (plan.fc_in, 1)
        shapes["fc.bias"] = (1,)
    else:
        cin = _head_in_channels(cfg)
        shapes["head.weight"] = (1, 1, cin, cfg.out_channels)
        shapes["head.bias"] = (cfg.out_channels,)
    return shapes


def _truncated_normal(rng: np.random.Generator, shape: tuple, std: float) -> np.ndarray:
    r = rng.random(size=int(np.prod(shape)))
    x = math.sqrt(2.0) * erfinv(_TRUNC_SPAN * (2.0 * r - 1.0))
    return (x * (std / _TRUNC_STD)).astype(np.float32).reshape(shape)


def init_weights(cfg: NetConfig, seed: int, side: int | None = 256) -> Weights:
    """Fan-in-scaled truncated-normal kernels, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in _expected_shapes(cfg, side).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        elif name == "fc.weight":
            std = math.sqrt(2.0 / shape[0])
            tensors[name] = _truncated_normal(rng, shape, std)
        else:
            k, _, cin, _ = shape
            std = math.sqrt(2.0 / (k * k * cin))
            tensors[name] = _truncated_normal(rng, shape, std)
    return Weights(config=cfg, tensors=tensors, side=side if cfg.head == "scalar" else None)


def param_count(weights: Weights) -> int:
    return int(sum(t.size for t in weights.tensors.values()))


class Generator(nn.Module):
    """Full-resolution or block-grid image-to-image network."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        if cfg.head == "scalar":
            raise ParameterError("use Discriminator for the scalar head")
        self.cfg = cfg
        k, pad = cfg.filter_size, cfg.filter_size // 2
        self.encoder = nn.ModuleList(
            nn.Conv2d(cin, cout, k, stride=2, padding=pad)
            for cin, cout in _encoder_layer_channels(cfg)
        )
        self.decoder = nn.ModuleList(
            nn.ConvTranspose2d(cin, cout, k, stride=2, padding=pad)
            for cin, cout in _decoder_layer_channels(cfg)
        )
        self.head = nn.Conv2d(_head_in_channels(cfg), cfg.out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        skips = []
        out = x
        for conv in self.encoder:
            out = torch.relu(conv(out))
            skips.append(out)
        if cfg.head == "full_res":
            for j, deconv in enumerate(self.decoder):
                if j > 0:
                    out = torch.cat([out, skips[cfg.depth - 1 - j]], dim=1)
                if j < cfg.depth - 1:
                    target = skips[cfg.depth - 2 - j].shape[-2:]
                else:
                    target = x.shape[-2:]
                out = torch.relu(deconv(out, output_size=target))
        else:
            for j, deconv in enumerate(self.decoder):
                if j > 0:
                    out = torch.cat([out, skips[cfg.depth - 1 - j]], dim=1)
                target = skips[cfg.depth - 2 - j].shape[-2:]
                out = torch.relu(deconv(out, output_size=target))
            if self.decoder:
                out = torch.cat([out, skips[3]], dim=1)
        return torch.sigmoid(self.head(out))


class Discriminator(nn.Module):
    """Conditioned real/fake classifier with a single FC logit."""

    def __init__(self, cfg: NetConfig, side: int):
        super().__init__()
        if cfg.head != "scalar":
            raise ParameterError("Discriminator requires head='scalar'")
        self.cfg = cfg
        self.side = side
        k, pad = cfg.filter_size, cfg.filter_size // 2
        self.encoder = nn.ModuleList(
            nn.Conv2d(cin, cout, k, stride=2, padding=pad)
            for cin, cout in _encoder_layer_channels(cfg)
        )
        plan = plan_shapes(cfg, side, side)
        self.fc = nn.Linear(plan.fc_in, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] != self.side or x.shape[-1] != self.side:
            raise ShapeError(
                f"discriminator input {x.shape[-2]}x{x.shape[-1]} must be the "
                f"training side {self.side}x{self.side}"
            )
        out = x
        for conv in self.encoder:
            out = nn.functional.leaky_relu(conv(out), 0.2)
        return torch.sigmoid(self.fc(out.flatten(1))).squeeze(1)


def _to_torch(name: str, tensor: np.ndarray) -> torch.Tensor:
    t = torch.from_numpy(np.ascontiguousarray(tensor))
    if name.endswith(".bias"):
        return t
    if name == "fc.weight":
        return t.T.contiguous()  # (in, out) -> (out, in)
    if name.startswith("decoder."):
        return t.permute(2, 3, 0, 1).contiguous()  # (k,k,cin,cout) -> (cin,cout,k,k)
    return t.permute(3, 2, 0, 1).contiguous()  # (k,k,cin,cout) -> (cout,cin,k,k)


def _from_torch(name: str, tensor: torch.Tensor) -> np.ndarray:
    t = tensor.detach()
    if name.endswith(".bias"):
        return t.numpy().copy()
    if name == "fc.weight":
        return t.T.contiguous().numpy().copy()
    if name.startswith("decoder."):
        return t.permute(2, 3, 0, 1).contiguous().numpy().copy()
    return t.permute(2, 3, 1, 0).contiguous().numpy().copy()


def _module_params(module: nn.Module) -> dict[str, nn.Parameter]:
    return dict(module.named_parameters())


def load_weights_into(module: nn.Module, weights: Weights) -> None:
    params = _module_params(module)
    expected = _expected_shapes(weights.config, weights.side)
    if set(expected) != set(weights.tensors):
        missing = set(expected) ^ set(weights.tensors)
        raise ShapeError(f"weight names do not match the configuration: {sorted(missing)}")
    for name, tensor in weights.tensors.items():
        if tuple(tensor.shape) != expected[name]:
            raise ShapeError(
                f"tensor {name} has shape {tuple(tensor.shape)}, expected {expected[name]}"
            )
        with torch.no_grad():
            params[name].copy_(_to_torch(name, tensor))


def extract_weights(module: nn.Module, cfg: NetConfig, side: int | None = None) -> Weights:
    tensors = {
        name: _from_torch(name, p) for name, p in _module_params(module).items()
    }
    return Weights(config=cfg, tensors=tensors, side=side)


def build_generator(weights: Weights) -> Generator:
    module = Generator(weights.config)
    load_weights_into(module, weights)
    module.eval()
    return module


def build_discriminator(weights: Weights) -> Discriminator:
    if weights.side is None:
        raise ParameterError("discriminator weights carry no training side")
    module = Discriminator(weights.config, weights.side)
    load_weights_into(module, weights)
    module.eval()
    return module


def _as_batch(*rasters: Raster) -> torch.Tensor:
    stacked = np.concatenate([r.pixels for r in rasters], axis=2)
    chw = np.ascontiguousarray(stacked.transpose(2, 0, 1))[None]
    return torch.from_numpy(chw)


def _as_raster(batch: torch.Tensor) -> Raster:
    hwc = batch[0].permute(1, 2, 0).numpy()
    return Raster.from_array(np.clip(hwc, 0.0, 1.0).astype(np.float32))


def shading_forward(outline: Raster, scheme: Raster, weights: Weights) -> Raster:
    """outline (1ch) + color scheme (3ch) -> shaded image at input size."""
    cfg = weights.config
    if cfg.head != "full_res" or cfg.in_channels != 4 or cfg.out_channels != 3:
        raise ShapeError("shading needs a 4-in/3-out full_res configuration")
    if outline.channels != 1 or scheme.channels != 3:
        raise ShapeError(
            f"expected 1-channel outline and 3-channel scheme, got "
            f"{outline.channels}/{scheme.channels}"
        )
    if (outline.height, outline.width) != (scheme.height, scheme.width):
        raise ShapeError(
            f"outline {outline.height}x{outline.width} and scheme "
            f"{scheme.height}x{scheme.width} dimensions differ"
        )
    plan_shapes(cfg, outline.height, outline.width)  # divisibility check
    module = build_generator(weights)
    with torch.no_grad():
        out = module(_as_batch(outline, scheme))
    return _as_raster(out)


def colorist_forward(outline: Raster, weights: Weights) -> Raster:
    """outline (1ch) -> mean-color block grid at 1/16 input size."""
    cfg = weights.config
    if cfg.head != "block_grid" or cfg.in_channels != 1 or cfg.out_channels != 3:
        raise ShapeError("color prediction needs a 1-in/3-out block_grid configuration")
    if outline.channels != 1:
        raise ShapeError(f"expected 1-channel outline, got {outline.channels}")
    plan_shapes(cfg, outline.height, outline.width)
    module = build_generator(weights)
    with torch.no_grad():
        out = module(_as_batch(outline))
    return _as_raster(out)


def discriminator_forward(
    outline: Raster, scheme: Raster, candidate: Raster, weights: Weights
) -> float:
    """P(candidate is a real image for this outline and scheme)."""
    cfg = weights.config
    if cfg.head != "scalar" or cfg.in_channels != 7:
        raise ShapeError("discrimination needs a 7-in scalar configuration")
    dims = {(r.height, r.width) for r in (outline, scheme, candidate)}
    if len(dims) != 1:
        raise ShapeError(f"input dimensions differ: {sorted(dims)}")
    (h, w), = dims
    if weights.side is None or h != weights.side or w != weights.side:
        raise ShapeError(
            f"input {h}x{w} must equal the discriminator's training side {weights.side}"
        )
    module = build_discriminator(weights)
    with torch.no_grad():
        out = module(_as_batch(outline, scheme, candidate))
    return float(out.item())
