"""Command-line interface for the full pipeline.

Exit codes: 0 on success, 1 on usage errors (unknown subcommands or flags),
2 on runtime failures (bad files, missing checkpoints, divergence). Every
subcommand accepts ``--seed`` and ``--config <file>``; the config file is
JSON whose sections mirror the dataclass field names exactly::

    {
      "train":   {"steps": 2000, "batch_size": 4, ...},
      "net":     {"depth": 3, "base_features": 16, ...},
      "degrade": {"patch_size": 10, "n_patches": 2000, "blur_sigma": 10.0},
      "blocks":  {"block_size": 16},
      "service": {"host": "127.0.0.1", "port": 8765, "max_side": 1024}
    }

Command-line flags override config-file values, which override defaults.
The ``TANDEM_PAINT_CONFIG`` environment variable names a fallback config
file used when ``--config`` is absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .checkpoint import load_checkpoint
from .errors import ParameterError, TandemPaintError
from .evaluate import evaluate_corpus
from .inference import colorize_auto, colorize_with_hints, ingest_hints, ingest_outline
from .models import NetConfig
from .pngio import png_decode, png_encode
from .prep import BlockParams, DegradeParams, build_dataset
from .raster import Rgb
from .synth import generate_corpus
from .training import TrainConfig, default_colorist_net, default_shader_net, train

CONFIG_ENV_VAR = "TANDEM_PAINT_CONFIG"


class _UsageError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems as exit code 1."""

    def error(self, message):
        raise _UsageError(self, message)


def _load_config_doc(args) -> dict:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParameterError(f"config file {path} must hold a JSON object")
    return doc


def _degrade_from(doc: dict) -> DegradeParams | None:
    sub = doc.get("degrade")
    if sub is None:
        return None
    kwargs = {
        k: sub[k] for k in ("patch_size", "n_patches", "blur_sigma") if k in sub
    }
    if "fill" in sub:
        kwargs["fill"] = Rgb(*sub["fill"])
    return DegradeParams(**kwargs)


def _blocks_from(doc: dict) -> BlockParams | None:
    sub = doc.get("blocks")
    if sub is None:
        return None
    return BlockParams(**sub)


def _net_from(doc: dict, default: NetConfig) -> NetConfig:
    sub = doc.get("net")
    if sub is None:
        return default
    merged = {**asdict(default), **sub}
    return NetConfig(**merged)


_TRAIN_FLAGS = (
    ("manifest", "manifest"),
    ("out", "out_dir"),
    ("steps", "steps"),
    ("batch_size", "batch_size"),
    ("side", "side"),
    ("lambda_pix", "lambda_pix"),
    ("lr", "learning_rate"),
    ("adv_weight", "adv_weight"),
    ("seed", "seed"),
    ("checkpoint_every", "checkpoint_every"),
)


def _train_config(args, doc: dict) -> TrainConfig:
    kwargs = dict(doc.get("train", {}))
    if "betas" in kwargs:
        kwargs["betas"] = tuple(kwargs["betas"])
    for flag, field_name in _TRAIN_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            kwargs[field_name] = value
    for required in ("manifest", "steps", "out_dir"):
        if required not in kwargs:
            raise ParameterError(
                f"training needs {required!r} from a flag or the config file"
            )
    return TrainConfig(**kwargs)


def _cmd_synth(args) -> int:
    doc = _load_config_doc(args)
    manifest = generate_corpus(
        n=args.n,
        side=args.side,
        master_seed=args.seed,
        out_dir=Path(args.out),
        degrade=_degrade_from(doc),
        blocks=_blocks_from(doc),
    )
    print(
        json.dumps(
            {
                "examples": len(manifest.records),
                "out": str(args.out),
                "side": manifest.side,
                "params_digest": manifest.params_digest,
            }
        )
    )
    return 0


def _cmd_prepare(args) -> int:
    doc = _load_config_doc(args)
    manifest = build_dataset(
        src_dir=Path(args.src),
        out_dir=Path(args.out),
        degrade=_degrade_from(doc) or DegradeParams(),
        blocks=_blocks_from(doc) or BlockParams(),
        side=args.side,
        master_seed=args.seed,
    )
    print(
        json.dumps(
            {
                "examples": len(manifest.records),
                "out": str(args.out),
                "side": manifest.side,
                "params_digest": manifest.params_digest,
            }
        )
    )
    return 0


def _cmd_train(args, which: str) -> int:
    doc = _load_config_doc(args)
    cfg = _train_config(args, doc)
    default = default_shader_net() if which == "shader" else default_colorist_net()
    ckpt, records = train(cfg, which=which, net=_net_from(doc, default))
    summary = {
        "checkpoint": str(Path(cfg.out_dir) / f"{which}.ckpt"),
        "steps": ckpt.step,
    }
    if records:
        summary["final_metrics"] = asdict(records[-1])
    print(json.dumps(summary))
    return 0


def _cmd_colorize(args) -> int:
    doc = _load_config_doc(args)
    if not args.shader:
        raise ParameterError("colorize needs --shader pointing at a checkpoint")
    outline = ingest_outline(png_decode(Path(args.outline).read_bytes()))
    shader = load_checkpoint(Path(args.shader)).weights
    if args.mode == "auto":
        if not args.colorist:
            raise ParameterError(
                "auto mode needs a colorist checkpoint (--colorist <file>)"
            )
        colorist = load_checkpoint(Path(args.colorist)).weights
        result = colorize_auto(outline, colorist, shader)
    else:
        hints = None
        if args.mode == "hint" and args.hints:
            hints = ingest_hints(png_decode(Path(args.hints).read_bytes()))
        result = colorize_with_hints(
            outline, hints, shader, degrade=_degrade_from(doc)
        )
    Path(args.out).write_bytes(png_encode(result))
    print(json.dumps({"out": str(args.out), "mode": args.mode}))
    return 0


def _cmd_eval(args) -> int:
    colorist = (
        load_checkpoint(Path(args.colorist)).weights if args.colorist else None
    )
    report = evaluate_corpus(
        Path(args.manifest),
        load_checkpoint(Path(args.shader)).weights,
        colorist,
        limit=args.limit,
        hint_radius=args.hint_radius,
    )
    doc = report.as_dict()
    if not args.per_scene:
        doc.pop("per_scene")
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    doc = _load_config_doc(args)
    kwargs = dict(doc.get("service", {}))
    if args.shader:
        kwargs["shader_checkpoint"] = args.shader
    if args.colorist:
        kwargs["colorist_checkpoint"] = args.colorist
    if args.host:
        kwargs["host"] = args.host
    if args.port is not None:
        kwargs["port"] = args.port
    if args.max_side is not None:
        kwargs["max_side"] = args.max_side
    if "shader_checkpoint" not in kwargs:
        raise ParameterError(
            "serve needs a shader checkpoint (--shader or service.shader_checkpoint)"
        )
    cfg = ServiceConfig(**kwargs)
    app = create_app(cfg, degrade=_degrade_from(doc))
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--config", help="JSON config file (fallback: $" + CONFIG_ENV_VAR + ")")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tandempaint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic training corpus")
    p.add_argument("--n", type=int, required=True, help="number of scenes")
    p.add_argument("--side", type=int, default=256)
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("prepare", help="build a dataset from a directory of PNGs")
    p.add_argument("--src", required=True, help="directory of source artwork")
    p.add_argument("--out", required=True)
    p.add_argument("--side", type=int, default=256)
    _add_common(p)
    p.set_defaults(func=_cmd_prepare)

    for which in ("shader", "colorist"):
        p = sub.add_parser(f"train-{which}", help=f"train the {which} network")
        p.add_argument("--manifest", help="dataset directory")
        p.add_argument("--out", help="run output directory")
        p.add_argument("--steps", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--side", type=int)
        p.add_argument("--lambda-pix", type=float, dest="lambda_pix")
        p.add_argument("--adv-weight", type=float, dest="adv_weight")
        p.add_argument("--lr", type=float)
        p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=lambda a, w=which: _cmd_train(a, w))

    p = sub.add_parser("colorize", help="colorize one outline image")
    p.add_argument("--outline", required=True, help="input outline PNG")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--hints", help="RGBA hint layer PNG")
    p.add_argument("--mode", choices=("auto", "hint", "blank"), default="hint")
    p.add_argument("--shader", help="shading network checkpoint")
    p.add_argument("--colorist", help="colorist checkpoint (auto mode)")
    _add_common(p)
    p.set_defaults(func=_cmd_colorize)

    p = sub.add_parser("eval", help="run corpus quality metrics")
    p.add_argument("--manifest", required=True, help="dataset directory")
    p.add_argument("--shader", required=True)
    p.add_argument("--colorist")
    p.add_argument("--limit", type=int)
    p.add_argument("--hint-radius", type=int, dest="hint_radius",
                   help="cap on the hint disc radius (default: the region's "
                        "inscribed radius)")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--per-scene", action="store_true", dest="per_scene")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="serve colorization over HTTP")
    p.add_argument("--shader")
    p.add_argument("--colorist")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--max-side", type=int, dest="max_side")
    _add_common(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"{exc.parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except TandemPaintError as exc:
        print(f"tandempaint: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tandempaint: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
