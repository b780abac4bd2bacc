"""HTTP endpoint speaking the predictor wire protocol.

``POST /predict`` takes ``{"id", "instruction", "input"}`` (all strings,
nothing else) and answers ``{"id", "output"}`` where ``output`` is a
templated response carrying both grammar fields. Any malformed request —
bad JSON, missing/extra keys, wrong types — is answered with HTTP 400
rather than the framework's default 422, because clients of this protocol
treat non-200 as transport-level and retry; 400 is the agreed signal.
Generation is serialized through a semaphore so a burst of concurrent
requests never runs more than ``max_concurrency`` decodes at once.
"""

import logging
import threading

import uvicorn
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, StrictStr

from .tune import ServingModel, load_artifact

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONCURRENCY = 4


class PredictRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: StrictStr
    instruction: StrictStr
    input: StrictStr


def create_app(serving: ServingModel, max_concurrency: int = DEFAULT_MAX_CONCURRENCY):
    if max_concurrency < 1:
        raise ValueError(f"max_concurrency must be >= 1, got {max_concurrency}")
    app = FastAPI(title="minitune endpoint", docs_url=None, redoc_url=None)
    gate = threading.Semaphore(max_concurrency)

    @app.exception_handler(RequestValidationError)
    async def bad_request(request, exc):
        detail = "; ".join(str(e.get("msg", "invalid")) for e in exc.errors()[:3])
        return JSONResponse(
            status_code=400, content={"error": f"malformed request: {detail}"}
        )

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.post("/predict")
    def predict(request: PredictRequest):
        with gate:
            output = serving.respond(request.instruction, request.input)
        return {"id": request.id, "output": output}

    return app


def run_server(
    artifact_dir,
    port: int | None = None,
    host: str = "127.0.0.1",
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY,
) -> None:
    """Load an artifact and serve it; blocks until interrupted."""
    serving = load_artifact(artifact_dir)
    if port is None:
        port = serving.config.port
    logger.info("serving %s on %s:%d", artifact_dir, host, port)
    uvicorn.run(create_app(serving, max_concurrency), host=host, port=port)
