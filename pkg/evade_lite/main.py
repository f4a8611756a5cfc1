"""
evade-lite HTTP model server.

Exposes any predictor through the JSON wire protocol as an HTTP endpoint
(``POST /``), which is what the ``http`` remote transport talks to. Started by
``evade-lite serve --http``.
"""

import time
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from evade_lite.api import health, predict
from evade_lite.api.schemas import ErrorReply
from evade_lite.domain.interfaces import Predictor
from evade_lite.infrastructure.model_server import RequestLog
from evade_lite.utils.config import get_settings
from evade_lite.utils.exceptions import EvadeException
from evade_lite.utils.logging import get_logger

logger = get_logger(__name__)


def create_app(predictor: Predictor, request_log: Optional[RequestLog] = None) -> FastAPI:
    """Build the FastAPI application serving ``predictor``."""
    settings = get_settings()
    app = FastAPI(
        title=f"{settings.app_name} model server",
        description="Black-box model endpoint speaking the evade-lite wire protocol",
        version=settings.app_version,
    )
    app.state.predictor = predictor
    app.state.request_log = request_log or RequestLog()

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        start_time = time.time()
        response = await call_next(request)
        logger.debug(
            "Request completed",
            method=request.method,
            path=request.url.path,
            status_code=response.status_code,
            process_time=round(time.time() - start_time, 6),
        )
        return response

    @app.exception_handler(EvadeException)
    async def evade_exception_handler(request: Request, exc: EvadeException):
        logger.warning(
            "Request rejected",
            error_code=exc.error_code,
            message=exc.message,
            path=request.url.path,
        )
        return JSONResponse(
            status_code=exc.status_code,
            content=ErrorReply(
                error=exc.message, error_code=exc.error_code, details=exc.details
            ).model_dump(),
        )

    app.include_router(predict.router)
    app.include_router(health.router)
    return app


def run(
    predictor: Predictor,
    host: str = "127.0.0.1",
    port: int = 8000,
    request_log: Optional[RequestLog] = None,
) -> None:
    import uvicorn

    settings = get_settings()
    logger.info("Starting HTTP model server", host=host, port=port, model=predictor.describe())
    uvicorn.run(
        create_app(predictor, request_log),
        host=host,
        port=port,
        log_level=settings.logging.level.lower(),
        access_log=False,
    )
