"""
Custom exceptions for evade-lite.

This module provides the exception hierarchy shared by every layer of the
toolkit. Each exception carries a stable error code, an HTTP status (used by the
model server) and a ``details`` mapping with the location of the failure.
"""

from typing import Any, Dict, Optional

from fastapi import status


class EvadeException(Exception):
    """Base exception for evade-lite with HTTP status support."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        status_code: int = status.HTTP_500_INTERNAL_SERVER_ERROR,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.__class__.__name__.upper()
        self.status_code = status_code
        self.details = details or {}


class ValidationError(EvadeException):
    """Raised when an argument or precondition check fails."""

    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="VALIDATION_ERROR",
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            **kwargs
        )
        if field:
            self.details["field"] = field


class IngestionError(EvadeException):
    """Raised when a CSV file cannot be turned into a dataset."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        row: Optional[int] = None,
        column: Optional[str] = None,
        **kwargs
    ):
        super().__init__(
            message,
            error_code="INGESTION_ERROR",
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            **kwargs
        )
        if path is not None:
            self.details["path"] = str(path)
        if row is not None:
            self.details["row"] = row
        if column is not None:
            self.details["column"] = column


class TransformError(EvadeException):
    """Raised when a preprocessor cannot encode a value."""

    def __init__(
        self,
        message: str,
        feature: Optional[str] = None,
        label: Optional[str] = None,
        **kwargs
    ):
        super().__init__(
            message,
            error_code="TRANSFORM_ERROR",
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            **kwargs
        )
        if feature is not None:
            self.details["feature"] = feature
        if label is not None:
            self.details["label"] = label


class TrainingError(EvadeException):
    """Raised when a target model cannot be fit."""

    def __init__(self, message: str, model_kind: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="TRAINING_ERROR",
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            **kwargs
        )
        if model_kind:
            self.details["model_kind"] = model_kind


class ConfigurationError(EvadeException):
    """Raised when configuration is invalid."""

    def __init__(self, message: str, setting: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="CONFIGURATION_ERROR",
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            **kwargs
        )
        if setting:
            self.details["setting"] = setting


class RemoteConnectionError(EvadeException):
    """Raised when a remote model cannot be reached or does not answer."""

    def __init__(self, message: str, target: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="REMOTE_CONNECTION_ERROR",
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            **kwargs
        )
        if target:
            self.details["target"] = target


class ProtocolError(EvadeException):
    """Raised when a wire message violates the model protocol."""

    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="PROTOCOL_ERROR",
            status_code=status.HTTP_400_BAD_REQUEST,
            **kwargs
        )
        if field:
            self.details["field"] = field


class AttackError(EvadeException):
    """Raised when an attack cannot be set up."""

    def __init__(self, message: str, pair: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="ATTACK_ERROR",
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            **kwargs
        )
        if pair:
            self.details["pair"] = pair


class ArtifactNotFoundError(EvadeException):
    """Raised when an upstream pipeline artifact is missing."""

    def __init__(self, artifact: str, **kwargs):
        super().__init__(
            f"Required artifact not found: {artifact}",
            error_code="ARTIFACT_NOT_FOUND",
            status_code=status.HTTP_404_NOT_FOUND,
            **kwargs
        )
        self.details["artifact"] = artifact


class ReportGenerationError(EvadeException):
    """Raised when report generation fails."""

    def __init__(self, message: str, report_type: Optional[str] = None, **kwargs):
        super().__init__(
            message,
            error_code="REPORT_GENERATION_ERROR",
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            **kwargs
        )
        if report_type:
            self.details["report_type"] = report_type
