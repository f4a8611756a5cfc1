from typing import Any, Dict

from fastapi import APIRouter, Request

from evade_lite.api.schemas import WireRequest
from evade_lite.infrastructure.model_server import handle_request

router = APIRouter(tags=["model"])


@router.post("/")
async def predict(message: WireRequest, request: Request) -> Dict[str, Any]:
    """
    Answer one wire-protocol message.

    ``meta`` returns the model dimensions, ``predict`` one label and one
    probability row per instance.
    """
    state = request.app.state
    return handle_request(message.model_dump(exclude_none=True), state.predictor, state.request_log)
