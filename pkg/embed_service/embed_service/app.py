"""HTTP surface: POST /embed for batches of texts, GET /health for readiness.

Protocol (JSON over HTTP/1.1):
    POST /embed   {"texts": ["...", ...]}        batch of at most 64
        200 -> {"vectors": [[...], ...], "dim": d}, unit-norm rows
        400 -> malformed body or empty batch
        413 -> batch larger than 64
        503 -> model still loading
    GET /health
        200 -> {"status": "ok", "model": name, "dim": d}
        503 -> while the model loads

One model instance; inference requests are serialized through a lock.
"""

from __future__ import annotations

import contextlib
import logging
import os
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backends import BackendLoadError, load_backend

logger = logging.getLogger("embed_service")

MAX_BATCH = 64
DEFAULT_MODEL = "hashed-ngram-512"


class EmbedRequest(BaseModel):
    texts: list[str]


def create_app(model_name: str | None = None, salt: int | None = None) -> FastAPI:
    model_name = model_name or os.environ.get("MODEL_NAME", DEFAULT_MODEL)
    salt = salt if salt is not None else int(os.environ.get("EMBED_SALT", "0"))
    state = {"backend": None, "error": None}
    infer_lock = threading.Lock()

    @contextlib.asynccontextmanager
    async def lifespan(_app: FastAPI):
        try:
            backend = load_backend(model_name, salt=salt)
        except BackendLoadError as err:
            state["error"] = str(err)
            logger.error("model load failed: %s", err)
        else:
            state["backend"] = backend
            logger.info(
                "embedding service ready: model=%s dim=%d", backend.name, backend.dimension
            )
        yield

    app = FastAPI(title="embed-service", lifespan=lifespan)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    def health():
        backend = state["backend"]
        if backend is None:
            detail = state["error"] or "model loading"
            return JSONResponse(status_code=503, content={"status": "loading", "error": detail})
        return {"status": "ok", "model": backend.name, "dim": backend.dimension}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        backend = state["backend"]
        if backend is None:
            detail = state["error"] or "model loading"
            return JSONResponse(status_code=503, content={"error": detail})
        if not request.texts:
            return JSONResponse(status_code=400, content={"error": "texts must be non-empty"})
        if len(request.texts) > MAX_BATCH:
            return JSONResponse(
                status_code=413, content={"error": f"batch exceeds {MAX_BATCH} texts"}
            )
        with infer_lock:
            vectors = backend.encode(request.texts)
        return {"vectors": vectors.tolist(), "dim": backend.dimension}

    return app
