"""One-endpoint embedding service over a frozen tabular encoder.

POST /embed   {"matrix": [[...], ...], "columns": [...]} ->
              {"vector": [...], "dim": d, "encoder_id": "..."}
GET  /health  200 {"status": "ok", "encoder_id": ..., "dim": d} once the
              model is loaded, 503 before that.

Responses are deterministic for fixed weights and input; vectors are
L2-normalized server-side.
"""

from __future__ import annotations

import argparse
import os

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .encoder import DEFAULT_DIM, make_encoder

DEFAULT_CHECKPOINT = "encoder_checkpoint.npz"


class EmbedRequest(BaseModel):
    matrix: list[list[float]] = Field(min_length=1)
    columns: list[str] | None = None


class ServiceState:
    def __init__(self, kind: str, checkpoint: str, dim: int, lazy: bool):
        self.kind = kind
        self.checkpoint = checkpoint
        self.dim = dim
        self.encoder = None
        if not lazy:
            self.load()

    def load(self):
        if self.encoder is None:
            self.encoder = make_encoder(self.kind, self.checkpoint, dim=self.dim)
        return self.encoder


def create_app(
    kind: str = "frozen",
    checkpoint: str = DEFAULT_CHECKPOINT,
    dim: int = DEFAULT_DIM,
    lazy: bool = False,
) -> FastAPI:
    app = FastAPI(title="tabular window encoder")
    state = ServiceState(kind, checkpoint, dim, lazy)
    app.state.service = state

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # Service contract: 400 with the offending field named.
        fields = ", ".join(
            ".".join(str(part) for part in err["loc"] if part != "body")
            for err in exc.errors()
        )
        return JSONResponse(status_code=400, content={"error": f"invalid field(s): {fields}"})

    @app.get("/health")
    def health():
        if state.encoder is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {
            "status": "ok",
            "encoder_id": state.encoder.encoder_id,
            "dim": state.encoder.dim,
        }

    @app.post("/embed")
    def embed(body: EmbedRequest):
        widths = {len(row) for row in body.matrix}
        if len(widths) != 1 or widths == {0}:
            return JSONResponse(
                status_code=400, content={"error": "invalid field(s): matrix (not rectangular)"}
            )
        if body.columns is not None and len(body.columns) != widths.pop():
            return JSONResponse(
                status_code=400,
                content={"error": "invalid field(s): columns (count != matrix width)"},
            )
        matrix = np.asarray(body.matrix, dtype=np.float64)
        if not np.isfinite(matrix).all():
            return JSONResponse(
                status_code=400, content={"error": "invalid field(s): matrix (non-finite)"}
            )
        try:
            encoder = state.load()
        except Exception as exc:  # model load failure is a service-level 503
            return JSONResponse(status_code=503, content={"error": str(exc)})
        vector = encoder.encode(matrix)
        return {
            "vector": [float(v) for v in vector],
            "dim": int(len(vector)),
            "encoder_id": encoder.encoder_id,
        }

    return app


def main(argv=None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="encoder-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8901)
    parser.add_argument("--encoder", default=os.environ.get("ENCODER_SERVICE_KIND", "frozen"),
                        help="frozen|tabpfn")
    parser.add_argument(
        "--checkpoint",
        default=os.environ.get("ENCODER_SERVICE_CHECKPOINT", DEFAULT_CHECKPOINT),
    )
    parser.add_argument("--dim", type=int,
                        default=int(os.environ.get("ENCODER_SERVICE_DIM", DEFAULT_DIM)))
    args = parser.parse_args(argv)
    app = create_app(kind=args.encoder, checkpoint=args.checkpoint, dim=args.dim)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
