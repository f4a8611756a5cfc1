from fastapi import APIRouter, Request

from evade_lite.api.schemas import HealthResponse
from evade_lite.utils.config import get_settings

router = APIRouter(tags=["health"])


@router.get("/health", response_model=HealthResponse)
async def health_check(request: Request) -> HealthResponse:
    """
    Health check of the model server.

    Returns:
        Server version, served model metadata and the number of requests served
    """
    state = request.app.state
    return HealthResponse(
        status="healthy",
        version=get_settings().app_version,
        model=state.predictor.describe(),
        requests_served=state.request_log.served,
    )
