"""FastAPI application implementing the wire protocol."""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import BadRequest, ContextOverflow, ModelEngine


class TokenizeRequest(BaseModel):
    text: str


class TokensRequest(BaseModel):
    tokens: list[int]


class GenerateMode(BaseModel):
    type: str = "greedy"
    k: int | None = None
    p: float | None = None
    seed: int | None = None


class GenerateRequest(BaseModel):
    tokens: list[int]
    max_new_tokens: int = Field(ge=1)
    mode: GenerateMode = GenerateMode()


def build_app(engine: ModelEngine, max_parallel: int = 4) -> FastAPI:
    app = FastAPI(title="xl3m model server")
    # Admission gate: at most max_parallel requests do model work at a time;
    # the engine additionally serializes actual model invocation.
    gate = threading.Semaphore(max_parallel)

    @app.exception_handler(ContextOverflow)
    async def _overflow(_: Request, exc: ContextOverflow):
        return JSONResponse(status_code=400,
                            content={"error": "context_overflow", "detail": str(exc)})

    @app.exception_handler(BadRequest)
    async def _bad(_: Request, exc: BadRequest):
        return JSONResponse(status_code=400,
                            content={"error": "bad_request", "detail": str(exc)})

    @app.get("/v1/info")
    def info():
        return {
            "name": engine.name,
            "vocab_size": engine.vocab_size,
            "context_window": engine.context_window,
            "max_parallel_hint": max_parallel,
        }

    @app.post("/v1/tokenize")
    def tokenize(req: TokenizeRequest):
        return {"tokens": engine.tokenize(req.text)}

    @app.post("/v1/detokenize")
    def detokenize(req: TokensRequest):
        return {"text": engine.detokenize(req.tokens)}

    @app.post("/v1/score")
    def score(req: TokensRequest):
        with gate:
            return {"logprobs": engine.score(req.tokens)}

    @app.post("/v1/generate")
    def generate(req: GenerateRequest):
        mode = {k: v for k, v in req.mode.model_dump().items() if v is not None}
        with gate:
            return {"tokens": engine.generate(req.tokens, req.max_new_tokens, mode)}

    return app
