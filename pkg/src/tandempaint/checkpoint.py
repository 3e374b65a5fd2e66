"""Binary checkpoint files.

Layout: 8-byte magic, little-endian u32 format version, little-endian u64
header length, UTF-8 JSON header, then raw little-endian float32 tensor data
packed in header directory order. The header stores the network configuration,
step/seed counters, optimizer moments directory, a short loss-history tail,
and a digest of the network's output on a fixed probe input; loading replays
the probe and refuses weights that no longer reproduce it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import (
    CheckpointDigestError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigMismatchError,
    ParameterError,
)
from .models import NetConfig, Weights, build_discriminator, build_generator

MAGIC = b"TNDMPNT\x01"
FORMAT_VERSION = 1
_PROBE_SEED = 271828
_LOSS_TAIL_LIMIT = 100


@dataclass
class Checkpoint:
    config: NetConfig
    step: int
    seed: int
    weights: Weights
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    adam_steps: int = 0
    loss_tail: tuple[float, ...] = ()
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.weights.config != self.config:
            raise ParameterError("checkpoint config and weight config differ")
        if set(self.moments) - set(self.weights.tensors):
            raise ParameterError("optimizer moments name tensors the network lacks")


def probe_digest(weights: Weights) -> str:
    """Hex digest of the network's output on a fixed seeded probe input."""
    cfg = weights.config
    if cfg.head == "scalar":
        side = weights.side
        module = build_discriminator(weights)
    else:
        side = max(32, cfg.required_multiple())
        module = build_generator(weights)
    rng = np.random.default_rng(_PROBE_SEED)
    x = rng.random((1, cfg.in_channels, side, side)).astype(np.float32)
    with torch.no_grad():
        out = module(torch.from_numpy(x))
    return hashlib.sha256(out.numpy().tobytes()).hexdigest()


def _config_doc(cfg: NetConfig) -> dict:
    return dataclasses.asdict(cfg)


def _config_from_doc(doc: dict) -> NetConfig:
    return NetConfig(**doc)


def save_checkpoint(ckpt: Checkpoint, path: Path) -> None:
    path = Path(path)
    directory = []
    chunks = []
    offset = 0

    def add(name: str, tensor: np.ndarray):
        nonlocal offset
        data = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
        directory.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)

    for name in sorted(ckpt.weights.tensors):
        add(f"weights/{name}", ckpt.weights.tensors[name])
    for name in sorted(ckpt.moments):
        m1, m2 = ckpt.moments[name]
        add(f"opt/{name}/m1", m1)
        add(f"opt/{name}/m2", m2)

    header = {
        "config": _config_doc(ckpt.config),
        "side": ckpt.weights.side,
        "step": ckpt.step,
        "seed": ckpt.seed,
        "adam_steps": ckpt.adam_steps,
        "loss_tail": list(ckpt.loss_tail[-_LOSS_TAIL_LIMIT:]),
        "probe_digest": probe_digest(ckpt.weights),
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = b"".join(
        [MAGIC, struct.pack("<I", ckpt.format_version),
         struct.pack("<Q", len(header_bytes)), header_bytes, *chunks]
    )
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def load_checkpoint(path: Path, expect: NetConfig | None = None) -> Checkpoint:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 12:
        raise CheckpointTruncatedError(
            f"{path}: {len(blob)} bytes is too short to hold a checkpoint header"
        )
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointVersionError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC) + 4)
    header_start = len(MAGIC) + 12
    data_start = header_start + header_len
    if len(blob) < data_start:
        raise CheckpointTruncatedError(
            f"{path}: header declares {header_len} bytes but only "
            f"{len(blob) - header_start} remain"
        )
    try:
        header = json.loads(blob[header_start:data_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointVersionError(f"{path}: unreadable header ({exc})") from exc

    cfg = _config_from_doc(header["config"])
    if expect is not None and cfg != expect:
        raise ConfigMismatchError(
            f"{path}: checkpoint was written for {cfg}, expected {expect}"
        )

    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = data_start + entry["offset"]
        end = start + 4 * count
        if end > len(blob):
            raise CheckpointTruncatedError(
                f"{path}: tensor {entry['name']} needs bytes up to {end}, "
                f"file has {len(blob)}"
            )
        flat = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        tensors[entry["name"]] = flat.reshape(shape).copy()

    weight_tensors = {
        name[len("weights/"):]: t for name, t in tensors.items()
        if name.startswith("weights/")
    }
    weights = Weights(config=cfg, tensors=weight_tensors, side=header["side"])
    digest = probe_digest(weights)
    if digest != header["probe_digest"]:
        raise CheckpointDigestError(
            f"{path}: probe output digest {digest[:12]}… does not match the "
            f"stored {header['probe_digest'][:12]}…"
        )

    moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name in weight_tensors:
        k1, k2 = f"opt/{name}/m1", f"opt/{name}/m2"
        if k1 in tensors and k2 in tensors:
            moments[name] = (tensors[k1], tensors[k2])

    return Checkpoint(
        config=cfg,
        step=header["step"],
        seed=header["seed"],
        weights=weights,
        moments=moments,
        adam_steps=header["adam_steps"],
        loss_tail=tuple(header["loss_tail"]),
        format_version=version,
    )
