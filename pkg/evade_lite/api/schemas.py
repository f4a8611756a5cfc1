"""
Pydantic schemas of the black-box model wire protocol.

One JSON document per message. ``{"op": "meta"}`` is answered with the model
dimensions; ``{"op": "predict", "instances": [[...], ...]}`` with one label
and one probability row per instance, in request order.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class WireRequest(BaseModel):
    """Request sent by a client."""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {"op": "predict", "instances": [[0.1, 0.5, 0.3, 0.9]]}
        }
    )

    op: Literal["meta", "predict"] = Field(..., description="Protocol operation")
    instances: Optional[List[List[float]]] = Field(
        default=None, description="Rows to classify (predict only)"
    )

    @model_validator(mode="after")
    def predict_needs_instances(self) -> "WireRequest":
        if self.op == "predict" and self.instances is None:
            raise ValueError("predict requests require instances")
        return self


class MetaReply(BaseModel):
    """Handshake reply."""

    n_features: int = Field(..., ge=1, description="Feature count of the model input")
    n_classes: int = Field(..., ge=2, description="Number of class outputs")


class PredictReply(BaseModel):
    """Prediction reply."""

    labels: List[int] = Field(..., description="Predicted class per instance")
    probabilities: List[List[float]] = Field(
        ..., description="Class probability row per instance"
    )


class ErrorReply(BaseModel):
    """Reply for a request the server could not serve."""

    error: str
    error_code: str = Field(default="PROTOCOL_ERROR")
    details: Dict[str, Any] = Field(default_factory=dict)


class HealthResponse(BaseModel):
    """Model server health."""

    status: str = Field(default="healthy")
    version: str
    model: Dict[str, Any]
    requests_served: int = Field(default=0, ge=0)
