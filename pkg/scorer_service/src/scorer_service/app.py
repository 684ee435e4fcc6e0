"""HTTP surface: health probe and single/batch pair scoring.

POST /v1/score accepts either {"candidate": str, "reference": str} or
{"pairs": [{"candidate": str, "reference": str}, ...]} and answers with
{"score": float} or {"scores": [float, ...]} in request order.  Malformed
bodies get 400, requests before the checkpoint is loaded get 503, and
inference failures get 500, all with {"error": {"code", "message"}} bodies.
"""

from __future__ import annotations

import os
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import Checkpoint, CheckpointError, PairScorer, default_checkpoint_path

ENV_CHECKPOINT = "SCORER_CHECKPOINT"
ENV_PORT = "SCORER_PORT"


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def _parse_pair(obj: object) -> tuple[str, str]:
    if not isinstance(obj, dict):
        raise ValueError("each pair must be an object")
    candidate, reference = obj.get("candidate"), obj.get("reference")
    if not isinstance(candidate, str) or not isinstance(reference, str):
        raise ValueError("'candidate' and 'reference' must both be strings")
    return candidate, reference


def create_app(checkpoint_path: str | None = None, load_immediately: bool = True) -> FastAPI:
    """Build the service; with load_immediately=False the checkpoint loads on startup."""
    path = checkpoint_path or os.environ.get(ENV_CHECKPOINT) or default_checkpoint_path()
    state: dict[str, PairScorer | None] = {"scorer": None}

    def load() -> None:
        state["scorer"] = PairScorer(Checkpoint.from_file(path))

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        if state["scorer"] is None:
            load()
        yield

    app = FastAPI(title="scorer-service", lifespan=lifespan)
    if load_immediately:
        load()

    @app.get("/healthz")
    def healthz():
        scorer = state["scorer"]
        if scorer is None:
            return _error(503, "loading", "checkpoint not loaded yet")
        return {"status": "ok", "checkpoint_id": scorer.checkpoint.checkpoint_id}

    @app.post("/v1/score")
    async def score(request: Request):
        scorer = state["scorer"]
        if scorer is None:
            return _error(503, "loading", "checkpoint not loaded yet")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "body must be JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "body must be a JSON object")
        try:
            if "pairs" in body:
                pairs = body["pairs"]
                if not isinstance(pairs, list) or not pairs:
                    raise ValueError("'pairs' must be a non-empty list")
                parsed = [_parse_pair(p) for p in pairs]
                batch = True
            else:
                parsed = [_parse_pair(body)]
                batch = False
        except ValueError as exc:
            return _error(400, "bad_request", str(exc))
        try:
            values = [scorer.score(candidate, reference) for candidate, reference in parsed]
        except CheckpointError as exc:
            return _error(500, "inference_error", str(exc))
        if batch:
            return {"scores": values, "checkpoint_id": scorer.checkpoint.checkpoint_id}
        return {"score": values[0], "checkpoint_id": scorer.checkpoint.checkpoint_id}

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get(ENV_PORT, "8400"))
    uvicorn.run(create_app(load_immediately=False), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
