"""HTTP face of the encoders: a single /embed_text endpoint.

POST /embed_text with ``{"texts": ["..."]}`` returns ``{"embeddings":
[[...], ...]}``, one unit-norm vector per input in order. An empty list
is answered with an empty list. Bad request bodies get a 4xx from
validation; encoder failures come back as a 500 with a JSON detail.
"""

import logging

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .encoders import Encoder

log = logging.getLogger(__name__)


class EmbedTextRequest(BaseModel):
    texts: list[str]


def build_app(encoder: Encoder) -> FastAPI:
    app = FastAPI(title="feature service")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "model": encoder.name, "dim": encoder.dim}

    @app.post("/embed_text")
    def embed_text(req: EmbedTextRequest) -> dict:
        if not req.texts:
            return {"embeddings": []}
        try:
            rows = encoder.encode_texts(req.texts)
        except Exception as exc:
            log.exception("embedding %d texts failed", len(req.texts))
            raise HTTPException(status_code=500, detail=f"encoder failure: {exc}")
        return {"embeddings": [[float(x) for x in row] for row in rows]}

    return app
