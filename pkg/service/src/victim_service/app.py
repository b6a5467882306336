"""The HTTP surface: POST /predict and GET /info.

Requests carry a base64 f32 little-endian CHW tensor; responses carry a
plain JSON score vector. Malformed requests get a 400 with a machine-
readable code ("bad_shape" or "bad_payload"); inference failures get a
500. Inference is stateless and deterministic, so request ordering never
matters.
"""

from __future__ import annotations

import base64
import binascii
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backends import Backend, load_backend

__all__ = ["ServiceConfig", "create_app", "decode_request", "postprocess", "BadRequest"]


@dataclass
class ServiceConfig:
    model: str = "echo:0.7,0.2,0.1"
    host: str = "127.0.0.1"
    port: int = 8400
    output: str = "probs"  # "probs" or "logits"
    top_k: Optional[int] = None

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"invalid port {self.port}")
        if self.output not in ("probs", "logits"):
            raise ValueError(f"output must be probs or logits, got {self.output!r}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")


class BadRequest(Exception):
    def __init__(self, code):
        super().__init__(code)
        self.code = code


def decode_request(doc, backend: Backend) -> np.ndarray:
    """Validate a /predict body and return the image as float64 CHW."""
    if not isinstance(doc, dict):
        raise BadRequest("bad_payload")
    try:
        shape = tuple(int(v) for v in doc["shape"])
        dtype = doc["dtype"]
        data_b64 = doc["data_b64"]
    except (KeyError, TypeError, ValueError):
        raise BadRequest("bad_payload") from None
    if dtype != "f32le" or not isinstance(data_b64, str):
        raise BadRequest("bad_payload")
    if len(shape) != 3 or any(v < 1 for v in shape):
        raise BadRequest("bad_shape")
    if not backend.accepts_shape(shape):
        raise BadRequest("bad_shape")
    try:
        raw = base64.b64decode(data_b64, validate=True)
    except (binascii.Error, ValueError):
        raise BadRequest("bad_payload") from None
    if len(raw) != 4 * math.prod(shape):
        raise BadRequest("bad_payload")
    x = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(x)):
        raise BadRequest("bad_payload")
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def postprocess(logits: np.ndarray, config: ServiceConfig, raw: bool) -> np.ndarray:
    """Apply the output mode and the optional top-k truncation."""
    scores = logits if raw or config.output == "logits" else _softmax(logits)
    if config.top_k is not None and config.top_k < scores.size:
        # emulate APIs exposing only top-k confidences: zero the rest,
        # deliberately without renormalizing
        keep = np.argsort(scores)[-config.top_k:]
        truncated = np.zeros_like(scores)
        truncated[keep] = scores[keep]
        scores = truncated
    return scores


def create_app(config: ServiceConfig, backend: Optional[Backend] = None) -> FastAPI:
    if backend is None:
        backend = load_backend(config.model)
    if config.top_k is not None and config.top_k > backend.num_classes:
        raise ValueError("top_k exceeds the number of classes")
    app = FastAPI()

    @app.get("/info")
    def info():
        return {
            "num_classes": backend.num_classes,
            "input_shape": list(backend.input_shape),
            "output": config.output,
        }

    @app.post("/predict")
    async def predict(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return JSONResponse({"error": "bad_payload"}, status_code=400)
        try:
            x = decode_request(doc, backend)
        except BadRequest as e:
            return JSONResponse({"error": e.code}, status_code=400)
        try:
            scores = postprocess(backend.logits(x), config, backend.raw)
        except Exception:
            return JSONResponse({"error": "inference_failure"}, status_code=500)
        return {"scores": scores.tolist(), "output": config.output}

    return app
