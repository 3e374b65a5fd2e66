"""Optimization loops: adversarial shading training, pure-L2 colorist training.

Each shader iteration runs one discriminator update then one generator update
on the same batch. The functional step operations take and return named weight
collections so callers can thread state explicitly; `train` drives them over a
dataset manifest with seeded shuffling and periodic checkpointing. All batches
are decoded up front; updates are strictly sequential, which is what makes
fixed-seed runs reproducible in single-threaded mode.
"""

from __future__ import annotations

import dataclasses
import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, save_checkpoint
from .errors import DivergenceError, ParameterError, ShapeError
from .models import (
    Discriminator,
    Generator,
    NetConfig,
    Weights,
    _from_torch,
    _to_torch,
    extract_weights,
    init_weights,
    load_weights_into,
)
from .prep import TrainingExample, load_example, load_manifest

BCE_EPS = 1e-7
_COLLAPSE_FLOOR = 1e-5
_COLLAPSE_PATIENCE = 200


@dataclass(frozen=True)
class TrainConfig:
    manifest: str
    steps: int
    out_dir: str
    batch_size: int = 4
    side: int = 256
    lambda_pix: float = 100.0
    learning_rate: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    adv_weight: float = 1.0
    seed: int = 0
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.steps < 0:
            raise ParameterError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lambda_pix < 0:
            raise ParameterError(f"lambda_pix must be >= 0, got {self.lambda_pix}")
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.adv_weight < 0:
            raise ParameterError(f"adv_weight must be >= 0, got {self.adv_weight}")
        if self.checkpoint_every < 1:
            raise ParameterError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if not (0 <= self.betas[0] < 1 and 0 <= self.betas[1] < 1):
            raise ParameterError(f"betas must lie in [0, 1), got {self.betas}")
        if self.side < 16 or self.side % 16:
            raise ParameterError(f"side must be a positive multiple of 16, got {self.side}")


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    d_loss: float = 0.0
    g_adv_loss: float = 0.0
    g_pix_loss: float = 0.0
    colorist_loss: float = 0.0
    wall_ms: float = 0.0

    def __post_init__(self):
        for name in ("d_loss", "g_adv_loss", "g_pix_loss", "colorist_loss", "wall_ms"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class OptState:
    """Adaptive-moment optimizer state, held as named numpy tensors."""

    learning_rate: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    steps: int = 0


def default_shader_net(depth: int = 4, base_features: int = 64, feature_cap: int = 512) -> NetConfig:
    return NetConfig(in_channels=4, out_channels=3, head="full_res", depth=depth,
                     base_features=base_features, feature_cap=feature_cap)


def default_colorist_net(depth: int = 4, base_features: int = 64, feature_cap: int = 512) -> NetConfig:
    return NetConfig(in_channels=1, out_channels=3, head="block_grid", depth=depth,
                     base_features=base_features, feature_cap=feature_cap)


def default_disc_net(like: NetConfig) -> NetConfig:
    return NetConfig(in_channels=like.in_channels + like.out_channels, out_channels=1,
                     head="scalar", depth=like.depth,
                     base_features=like.base_features, feature_cap=like.feature_cap)


def _batch_tensors(batch: list[TrainingExample]):
    if not batch:
        raise ParameterError("batch is empty")
    dims = {(e.outline.height, e.outline.width) for e in batch}
    if len(dims) != 1:
        raise ShapeError(f"batch mixes example sizes: {sorted(dims)}")

    def stack(part):
        planes = [np.ascontiguousarray(getattr(e, part).pixels.transpose(2, 0, 1)) for e in batch]
        return torch.from_numpy(np.stack(planes))

    return stack("outline"), stack("scheme"), stack("target"), stack("block_target")


def _bce(p: torch.Tensor, target_is_one: bool) -> torch.Tensor:
    p = p.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return (-torch.log(p)).mean() if target_is_one else (-torch.log(1.0 - p)).mean()


def _d_loss(g: Generator, d: Discriminator, xo, xs, y) -> torch.Tensor:
    with torch.no_grad():
        fake = g(torch.cat([xo, xs], dim=1))
    p_real = d(torch.cat([xo, xs, y], dim=1))
    p_fake = d(torch.cat([xo, xs, fake], dim=1))
    return 0.5 * (_bce(p_real, True) + _bce(p_fake, False))


def _g_losses(g: Generator, d: Discriminator, xo, xs, y, lambda_pix, adv_weight):
    fake = g(torch.cat([xo, xs], dim=1))
    pix = torch.mean((fake - y) ** 2)
    if adv_weight > 0:
        adv = _bce(d(torch.cat([xo, xs, fake], dim=1)), True)
    else:
        with torch.no_grad():
            adv = _bce(d(torch.cat([xo, xs, fake], dim=1)), True)
    return adv_weight * adv + lambda_pix * pix, adv, pix


def _make_optimizer(module: torch.nn.Module, state: OptState) -> torch.optim.Adam:
    opt = torch.optim.Adam(module.parameters(), lr=state.learning_rate, betas=state.betas)
    if state.moments:
        for name, p in module.named_parameters():
            m1, m2 = state.moments[name]
            opt.state[p] = {
                "step": torch.tensor(float(state.steps)),
                "exp_avg": _to_torch(name, m1).clone(),
                "exp_avg_sq": _to_torch(name, m2).clone(),
            }
    return opt


def _capture_optimizer(module: torch.nn.Module, opt: torch.optim.Adam, state: OptState) -> None:
    moments = {}
    steps = state.steps
    for name, p in module.named_parameters():
        st = opt.state.get(p)
        if st:
            moments[name] = (
                _from_torch(name, st["exp_avg"]),
                _from_torch(name, st["exp_avg_sq"]),
            )
            raw = st["step"]
            steps = int(raw.item()) if torch.is_tensor(raw) else int(raw)
    state.moments = moments
    state.steps = steps


def _check_finite(loss: torch.Tensor, what: str, step: int) -> None:
    if not bool(torch.isfinite(loss)):
        raise DivergenceError(f"{what} loss is non-finite", step=step)


def d_step(batch, g_weights: Weights, d_weights: Weights, opt_state: OptState):
    """One discriminator update against the current (frozen) generator."""
    xo, xs, y, _ = _batch_tensors(batch)
    g = Generator(g_weights.config)
    load_weights_into(g, g_weights)
    d = Discriminator(d_weights.config, d_weights.side)
    load_weights_into(d, d_weights)
    opt = _make_optimizer(d, opt_state)
    loss = _d_loss(g, d, xo, xs, y)
    _check_finite(loss, "discriminator", opt_state.steps + 1)
    opt.zero_grad()
    loss.backward()
    opt.step()
    _capture_optimizer(d, opt, opt_state)
    return extract_weights(d, d_weights.config, side=d_weights.side), float(loss.item())


def g_step(batch, g_weights: Weights, d_weights: Weights, opt_state: OptState,
           lambda_pix: float, adv_weight: float = 1.0):
    """One generator update: adversarial term through a frozen discriminator
    plus pixel-space mean squared error."""
    if adv_weight == 0 and lambda_pix == 0:
        raise ParameterError("generator update needs adv_weight > 0 or lambda_pix > 0")
    xo, xs, y, _ = _batch_tensors(batch)
    g = Generator(g_weights.config)
    load_weights_into(g, g_weights)
    d = Discriminator(d_weights.config, d_weights.side)
    load_weights_into(d, d_weights)
    for p in d.parameters():
        p.requires_grad_(False)
    opt = _make_optimizer(g, opt_state)
    loss, adv, pix = _g_losses(g, d, xo, xs, y, lambda_pix, adv_weight)
    _check_finite(loss, "generator", opt_state.steps + 1)
    opt.zero_grad()
    loss.backward()
    opt.step()
    _capture_optimizer(g, opt, opt_state)
    return (
        extract_weights(g, g_weights.config),
        float(adv.item()),
        float(pix.item()),
    )


def colorist_step(batch, c_weights: Weights, opt_state: OptState):
    """One pure-regression update of the color-prediction network."""
    xo, _, _, blocks = _batch_tensors(batch)
    c = Generator(c_weights.config)
    load_weights_into(c, c_weights)
    opt = _make_optimizer(c, opt_state)
    pred = c(xo)
    if pred.shape != blocks.shape:
        raise ShapeError(
            f"predicted grid {tuple(pred.shape)} does not match targets {tuple(blocks.shape)}"
        )
    loss = torch.mean((pred - blocks) ** 2)
    _check_finite(loss, "colorist", opt_state.steps + 1)
    opt.zero_grad()
    loss.backward()
    opt.step()
    _capture_optimizer(c, opt, opt_state)
    return extract_weights(c, c_weights.config), float(loss.item())


def _batch_indices(rng: np.random.Generator, n: int, batch_size: int):
    while True:
        perm = rng.permutation(n)
        for i in range(0, n - batch_size + 1, batch_size):
            yield perm[i:i + batch_size]


def train(config: TrainConfig, which: str = "shader",
          net: NetConfig | None = None, disc: NetConfig | None = None):
    """Run a full training loop; returns (final Checkpoint, metrics records)."""
    if which not in ("shader", "colorist"):
        raise ParameterError(f"which must be 'shader' or 'colorist', got {which!r}")
    torch.set_num_threads(1)

    manifest = load_manifest(Path(config.manifest))
    if manifest.side != config.side:
        raise ParameterError(
            f"dataset was built at side {manifest.side}, config expects {config.side}"
        )
    ids = [r.example_id for r in manifest.records]
    if len(ids) < config.batch_size:
        raise ParameterError(
            f"dataset has {len(ids)} examples; need at least batch_size={config.batch_size}"
        )
    examples = [load_example(manifest, i) for i in ids]

    if net is None:
        net = default_shader_net() if which == "shader" else default_colorist_net()
    wanted_head = "full_res" if which == "shader" else "block_grid"
    if net.head != wanted_head:
        raise ParameterError(f"{which} training needs a {wanted_head} network, got {net.head}")

    g_weights = init_weights(net, seed=config.seed)
    opt_g = OptState(learning_rate=config.learning_rate, betas=tuple(config.betas))
    d_weights = None
    opt_d = None
    if which == "shader":
        disc = disc or default_disc_net(net)
        if disc.head != "scalar":
            raise ParameterError("discriminator network must have the scalar head")
        d_weights = init_weights(disc, seed=config.seed + 1, side=config.side)
        opt_d = OptState(learning_rate=config.learning_rate, betas=tuple(config.betas))

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / f"{which}.ckpt"
    metrics_path = out_dir / "metrics.jsonl"
    tail: deque[float] = deque(maxlen=100)

    def snapshot(step: int) -> Checkpoint:
        return Checkpoint(
            config=net, step=step, seed=config.seed, weights=g_weights,
            moments=dict(opt_g.moments), adam_steps=opt_g.steps,
            loss_tail=tuple(tail),
        )

    save_checkpoint(snapshot(0), ckpt_path)

    rng = np.random.default_rng(config.seed)
    batches = _batch_indices(rng, len(examples), config.batch_size)
    records: list[MetricsRecord] = []
    collapse_run = 0

    with open(metrics_path, "a", encoding="utf-8") as metrics_file:
        for step in range(1, config.steps + 1):
            batch = [examples[i] for i in next(batches)]
            t0 = time.perf_counter()
            if which == "shader":
                d_weights, d_loss = d_step(batch, g_weights, d_weights, opt_d)
                g_weights, g_adv, g_pix = g_step(
                    batch, g_weights, d_weights, opt_g,
                    config.lambda_pix, adv_weight=config.adv_weight,
                )
                tail.append(g_pix)
                record = MetricsRecord(
                    step=step, d_loss=d_loss, g_adv_loss=g_adv, g_pix_loss=g_pix,
                    wall_ms=(time.perf_counter() - t0) * 1000.0,
                )
                collapse_run = collapse_run + 1 if d_loss < _COLLAPSE_FLOOR else 0
            else:
                g_weights, c_loss = colorist_step(batch, g_weights, opt_g)
                tail.append(c_loss)
                record = MetricsRecord(
                    step=step, colorist_loss=c_loss,
                    wall_ms=(time.perf_counter() - t0) * 1000.0,
                )
            records.append(record)
            metrics_file.write(json.dumps(dataclasses.asdict(record), sort_keys=True) + "\n")
            metrics_file.flush()
            if collapse_run >= _COLLAPSE_PATIENCE:
                raise DivergenceError(
                    f"discriminator loss stayed below {_COLLAPSE_FLOOR} for "
                    f"{_COLLAPSE_PATIENCE} consecutive steps",
                    step=step,
                )
            if step % config.checkpoint_every == 0 and step < config.steps:
                save_checkpoint(snapshot(step), ckpt_path)

    final = snapshot(config.steps)
    save_checkpoint(final, ckpt_path)
    return final, records
