"""HTTP colorization service.

A thin façade over the same functions the CLI ``colorize`` subcommand calls,
so a request and the equivalent CLI invocation produce byte-identical PNGs.
Checkpoints are loaded once at startup and shared immutably across requests;
the served-request counter is the only mutable state and sits behind a lock.
Logs go to stderr as JSON Lines.
"""

from __future__ import annotations

import json
import logging
import sys
import threading
import time
import uuid
from dataclasses import asdict, dataclass
from hashlib import sha256
from pathlib import Path

from fastapi import FastAPI, File, Form, Response, UploadFile
from fastapi.responses import JSONResponse

from .checkpoint import Checkpoint, load_checkpoint, probe_digest
from .errors import ParameterError, TandemPaintError
from .inference import colorize_auto, colorize_with_hints, ingest_hints, ingest_outline
from .models import NetConfig
from .pngio import png_decode, png_encode
from .prep import DegradeParams

logger = logging.getLogger(__name__)


class _JsonLineFormatter(logging.Formatter):
    def format(self, record):
        doc = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "event": record.getMessage(),
        }
        extra = getattr(record, "fields", None)
        if extra:
            doc.update(extra)
        if record.exc_info:
            doc["error"] = self.formatException(record.exc_info)
        return json.dumps(doc, sort_keys=True)


def _ensure_stderr_handler() -> None:
    if any(isinstance(h.formatter, _JsonLineFormatter) for h in logger.handlers):
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    logger.propagate = False


def _log(event: str, **fields) -> None:
    logger.info(event, extra={"fields": fields})


@dataclass(frozen=True)
class ServiceConfig:
    """Startup parameters for the colorization service."""

    shader_checkpoint: str
    colorist_checkpoint: str | None = None
    host: str = "127.0.0.1"
    port: int = 8765
    max_side: int = 1024
    body_limit: int = 32 * 1024 * 1024

    def __post_init__(self):
        if self.max_side < 64:
            raise ParameterError(f"max_side must be >= 64, got {self.max_side}")
        if self.port < 1 or self.port > 65535:
            raise ParameterError(f"port must be in [1, 65535], got {self.port}")
        if self.body_limit < 1024:
            raise ParameterError(f"body_limit must be >= 1024, got {self.body_limit}")


def config_digest(cfg: NetConfig) -> str:
    return sha256(json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()


class ServiceState:
    """Immutable model snapshot plus the lone mutable counter."""

    def __init__(
        self,
        config: ServiceConfig,
        shader: Checkpoint,
        colorist: Checkpoint | None,
        degrade: DegradeParams,
    ):
        self.config = config
        self.shader = shader
        self.colorist = colorist
        self.degrade = degrade
        self.started = time.monotonic()
        self._count = 0
        self._lock = threading.Lock()

    def bump(self) -> int:
        with self._lock:
            self._count += 1
            return self._count

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def checkpoint_doc(self, role: str) -> dict | None:
        ckpt = self.shader if role == "shader" else self.colorist
        path = (
            self.config.shader_checkpoint
            if role == "shader"
            else self.config.colorist_checkpoint
        )
        if ckpt is None:
            return None
        return {
            "role": role,
            "path": str(path),
            "step": ckpt.step,
            "config_digest": config_digest(ckpt.config),
        }


class _RequestError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def _decode_part(name: str, data: bytes, state: ServiceState):
    if len(data) > state.config.body_limit:
        raise _RequestError(
            413, f"{name} part is {len(data)} bytes, limit {state.config.body_limit}"
        )
    try:
        img = png_decode(data)
    except TandemPaintError as exc:
        raise _RequestError(400, f"could not decode {name}: {exc}") from exc
    if max(img.height, img.width) > state.config.max_side:
        raise _RequestError(
            413,
            f"{name} is {img.height}x{img.width}, limit {state.config.max_side} "
            "per side",
        )
    return img


def _run_colorize(state: ServiceState, outline_bytes: bytes,
                  hints_bytes: bytes | None, mode: str) -> bytes:
    if mode not in ("auto", "hint", "blank"):
        raise _RequestError(400, f"mode must be auto, hint, or blank, got {mode!r}")
    try:
        outline = ingest_outline(_decode_part("outline", outline_bytes, state))
    except TandemPaintError as exc:
        raise _RequestError(400, str(exc)) from exc
    try:
        if mode == "auto":
            if state.colorist is None:
                raise _RequestError(
                    409, "auto mode needs a colorist checkpoint, none is loaded"
                )
            result = colorize_auto(
                outline, state.colorist.weights, state.shader.weights
            )
        else:
            hints = None
            if mode == "hint" and hints_bytes:
                hints = ingest_hints(_decode_part("hints", hints_bytes, state))
            result = colorize_with_hints(
                outline, hints, state.shader.weights, degrade=state.degrade
            )
    except _RequestError:
        raise
    except TandemPaintError as exc:
        raise _RequestError(400, str(exc)) from exc
    return png_encode(result)


def create_app(config: ServiceConfig, degrade: DegradeParams | None = None) -> FastAPI:
    """Load checkpoints and build the service application."""
    _ensure_stderr_handler()
    shader = load_checkpoint(Path(config.shader_checkpoint))
    colorist = (
        load_checkpoint(Path(config.colorist_checkpoint))
        if config.colorist_checkpoint
        else None
    )
    state = ServiceState(config, shader, colorist, degrade or DegradeParams())
    _log(
        "startup",
        shader=state.checkpoint_doc("shader"),
        colorist=state.checkpoint_doc("colorist"),
        max_side=config.max_side,
    )

    app = FastAPI(title="tandempaint", docs_url=None, redoc_url=None)
    app.state.service = state

    @app.post("/v1/colorize")
    def colorize(
        outline: UploadFile = File(...),
        hints: UploadFile | None = File(None),
        mode: str = Form("hint"),
    ):
        serial = state.bump()
        started = time.monotonic()
        outline_bytes = outline.file.read()
        hints_bytes = hints.file.read() if hints is not None else None
        try:
            png = _run_colorize(state, outline_bytes, hints_bytes, mode)
        except _RequestError as exc:
            _log(
                "colorize_rejected",
                request=serial,
                status=exc.status,
                detail=exc.detail,
                mode=mode,
            )
            return JSONResponse({"detail": exc.detail}, status_code=exc.status)
        except Exception:
            failure_id = uuid.uuid4().hex
            logger.exception(
                "colorize_failed", extra={"fields": {"id": failure_id}}
            )
            return JSONResponse(
                {"detail": f"internal error, reference {failure_id}"},
                status_code=500,
            )
        _log(
            "colorize_ok",
            request=serial,
            mode=mode,
            ms=round(1000 * (time.monotonic() - started), 1),
            bytes=len(png),
        )
        return Response(content=png, media_type="image/png")

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "uptime_seconds": round(time.monotonic() - state.started, 3),
            "requests": state.count,
            "shader": state.checkpoint_doc("shader"),
            "colorist": state.checkpoint_doc("colorist"),
            "auto_available": state.colorist is not None,
        }

    @app.get("/v1/models")
    def models():
        docs = []
        for role in ("shader", "colorist"):
            doc = state.checkpoint_doc(role)
            if doc is None:
                continue
            ckpt = state.shader if role == "shader" else state.colorist
            doc["config"] = asdict(ckpt.config)
            doc["probe_digest"] = probe_digest(ckpt.weights)
            docs.append(doc)
        return {"models": docs}

    return app
