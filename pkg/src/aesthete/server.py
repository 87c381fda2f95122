"""HTTP service exposing evaluation, heatmaps, prompts, and region suggestions.

Endpoints (JSON unless noted):
  POST /api/evaluate                      multipart image upload or {"image_b64": ...}
  GET  /api/heatmap/{id}/{attribute}.png  grayscale attention heatmap
  POST /api/region                        {"image_id", "rect": [x0, y0, x1, y1]}
  GET  /api/model/info
  GET  /api/health

Errors use a stable envelope: {"error": {"code": ..., "message": ...}}.
The model is read-only; the LRU session store is the only mutable state.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
import time
import uuid
from collections import OrderedDict

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from PIL import Image, UnidentifiedImageError

from . import guidance
from .guidance import HeuristicConfig, to_display_score

MAX_UPLOAD_BYTES = 8 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status, code, message):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class SessionStore:
    """Bounded image-id -> (image, report) map with LRU eviction."""

    def __init__(self, capacity=256):
        self.capacity = capacity
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, dict] = OrderedDict()

    def put(self, image, report):
        image_id = uuid.uuid4().hex
        with self._lock:
            self._entries[image_id] = {"image": image, "report": report, "timestamp": time.time()}
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
        return image_id

    def get(self, image_id):
        with self._lock:
            entry = self._entries.get(image_id)
            if entry is not None:
                self._entries.move_to_end(image_id)
            return entry

    def __len__(self):
        with self._lock:
            return len(self._entries)


def _decode_image(raw, image_size):
    if len(raw) > MAX_UPLOAD_BYTES:
        raise ApiError(413, "payload_too_large", f"image exceeds {MAX_UPLOAD_BYTES} bytes")
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ApiError(400, "bad_image", f"cannot decode image: {exc}") from exc
    img = img.convert("RGB")
    if img.size != (image_size, image_size):
        img = img.resize((image_size, image_size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def _evaluate_response(image_id, report, prompt):
    return {
        "image_id": image_id,
        "overall": {"raw": report.overall, "display": to_display_score(report.overall)},
        "attributes": [
            {
                "name": a.name,
                "score": a.score,
                "display_score": to_display_score(a.score),
                "weight": a.weight,
                "heatmap_url": f"/api/heatmap/{image_id}/{a.name}.png",
            }
            for a in report.attributes
        ],
        "prompt": prompt.to_dict() if prompt else None,
    }


def heatmap_png(mask, size):
    """Grayscale PNG: nearest upsampled, normalized so the peak cell is 255."""
    mask = np.asarray(mask, dtype=np.float64)
    peak = mask.max()
    scaled = mask / peak if peak > 0 else np.zeros_like(mask)
    up = guidance._upsample_nearest(scaled, size, size)
    buf = io.BytesIO()
    Image.fromarray((up * 255.0 + 0.5).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def create_app(model=None, heuristics=None, session_capacity=256):
    """Build the FastAPI app around a loaded (read-only) model."""
    app = FastAPI(title="aesthete", docs_url=None, redoc_url=None)
    app.state.model = model
    app.state.heuristics = heuristics or HeuristicConfig()
    app.state.sessions = SessionStore(session_capacity)
    app.state.model_lock = threading.Lock()  # serializes forward passes

    @app.exception_handler(ApiError)
    async def handle_api_error(_request, exc):
        return JSONResponse(status_code=exc.status, content={"error": {"code": exc.code, "message": exc.message}})

    def require_model():
        if app.state.model is None:
            raise ApiError(503, "model_not_loaded", "no model is loaded")
        return app.state.model

    @app.get("/api/health")
    async def health():
        return {"status": "ok", "model_loaded": app.state.model is not None}

    @app.get("/api/model/info")
    async def model_info():
        model = require_model()
        return {
            "image_size": model.config.image_size,
            "feature_size": model.config.feature_size,
            "attributes": list(model.config.attribute_names),
            "sigma": model.config.sigma,
            "poll_interval": app.state.heuristics.poll_interval,
        }

    @app.post("/api/evaluate")
    async def evaluate(request: Request):
        model = require_model()
        raw = None
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image")
            if upload is None:
                raise ApiError(400, "missing_image", "multipart field 'image' is required")
            raw = await upload.read()
        else:
            try:
                body = await request.json()
            except Exception as exc:
                raise ApiError(400, "bad_request", "expected multipart upload or JSON body") from exc
            b64 = body.get("image_b64") if isinstance(body, dict) else None
            if not b64:
                raise ApiError(400, "missing_image", "JSON body must contain 'image_b64'")
            try:
                raw = base64.b64decode(b64, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise ApiError(400, "bad_image", "invalid base64 image data") from exc
        image = _decode_image(raw, model.config.image_size)
        with app.state.model_lock:
            report = model.evaluate(image)
        prompt = guidance.build_prompt(report, image, app.state.heuristics)
        image_id = app.state.sessions.put(image, report)
        return _evaluate_response(image_id, report, prompt)

    @app.get("/api/heatmap/{image_id}/{attribute}.png")
    async def heatmap(image_id: str, attribute: str):
        model = require_model()
        entry = app.state.sessions.get(image_id)
        if entry is None:
            raise ApiError(404, "unknown_session", f"no session {image_id}")
        if attribute not in model.config.attribute_names:
            raise ApiError(404, "unknown_attribute", f"no attribute {attribute!r}")
        mask = entry["report"].attribute(attribute).mask
        return Response(content=heatmap_png(mask, model.config.image_size), media_type="image/png")

    @app.post("/api/region")
    async def region(request: Request):
        require_model()
        try:
            body = await request.json()
        except Exception as exc:
            raise ApiError(400, "bad_request", "expected a JSON body") from exc
        image_id = body.get("image_id")
        rect = body.get("rect")
        entry = app.state.sessions.get(image_id) if image_id else None
        if entry is None:
            raise ApiError(404, "unknown_session", f"no session {image_id}")
        if not isinstance(rect, (list, tuple)) or len(rect) != 4:
            raise ApiError(422, "invalid_region", "rect must be [x0, y0, x1, y1]")
        try:
            rect = [float(v) for v in rect]
        except (TypeError, ValueError) as exc:
            raise ApiError(422, "invalid_region", "rect values must be numbers") from exc
        x0, y0, x1, y1 = rect
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ApiError(422, "invalid_region", "rect must lie in [0,1]^2 with nonzero area")
        message = guidance.regional_suggestion(entry["report"], rect)
        return message.to_dict()

    return app
