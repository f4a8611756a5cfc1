"""
Pydantic models (schemas) for evade-lite configuration.

Every configurable type of the toolkit is defined here: training, explanation,
analysis thresholds, attacks, epsilon search, remote models, and the
``RunConfig`` document that drives the CLI pipeline.
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from evade_lite.utils.config import derive_seed


class TrainConfig(BaseModel):
    """Hyperparameters for the built-in target models."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=0.5, gt=0)
    epochs: int = Field(default=2000, ge=1)
    max_depth: int = Field(default=5, ge=1)
    regularization: float = Field(default=1e-4, ge=0)
    seed: int = Field(default=42)


class ShapConfig(BaseModel):
    """Kernel SHAP engine settings."""

    model_config = ConfigDict(extra="forbid")

    background_size: int = Field(default=100, ge=1)
    exact_threshold: int = Field(default=12, ge=1)
    sample_budget: int = Field(default=2048, ge=2)
    ridge: float = Field(default=1e-8, ge=0)
    seed: int = Field(default=42)


class Thresholds(BaseModel):
    """Impact category thresholds on the normalized feature range."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    t_low: float = Field(default=0.33)
    t_high: float = Field(default=0.66)

    @model_validator(mode="after")
    def check_order(self) -> "Thresholds":
        if not (0.0 < self.t_low < self.t_high < 1.0):
            raise ValueError("thresholds must satisfy 0 < t_low < t_high < 1")
        return self


class AttackConfig(BaseModel):
    """Settings of one evasion pass."""

    model_config = ConfigDict(extra="forbid")

    d_max: float = Field(default=0.5, gt=0, le=1)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    allowed_features: Optional[List[int]] = Field(default=None)
    feature_order: Literal["schema", "shap_rank"] = Field(default="schema")
    top_k: Optional[int] = Field(default=None, ge=1)

    @field_validator("allowed_features")
    @classmethod
    def unique_features(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None:
            if len(set(v)) != len(v):
                raise ValueError("allowed_features must not contain duplicates")
            if any(f < 0 for f in v):
                raise ValueError("allowed_features must be feature indices")
        return v

    def with_epsilon(self, epsilon: float) -> "AttackConfig":
        """Copy of this config with a different perturbation budget."""
        return AttackConfig.model_validate({**self.model_dump(), "d_max": epsilon})


class EpsilonSearchConfig(BaseModel):
    """Bisection range and stopping tolerance for the optimal epsilon search."""

    model_config = ConfigDict(extra="forbid")

    eps_low: float = Field(default=0.0)
    eps_high: float = Field(default=0.5)
    tolerance: float = Field(default=0.01, gt=0)

    @model_validator(mode="after")
    def check_range(self) -> "EpsilonSearchConfig":
        if not (0.0 <= self.eps_low < self.eps_high <= 1.0):
            raise ValueError("search range must satisfy 0 <= eps_low < eps_high <= 1")
        return self


class RemoteModelConfig(BaseModel):
    """Connection settings for an external black-box model."""

    model_config = ConfigDict(extra="forbid")

    transport: Literal["subprocess", "http"] = Field(default="subprocess")
    target: Union[str, List[str]] = Field(..., description="Command line or URL")
    timeout: float = Field(default=10.0, gt=0)
    batch_limit: int = Field(default=1024, ge=1)
    name: str = Field(default="remote")


class DatasetConfig(BaseModel):
    """Location and schema hints of the input CSV."""

    model_config = ConfigDict(extra="forbid")

    path: Path
    header: Literal["auto", "present", "absent"] = Field(default="auto")
    delimiter: str = Field(default=",", min_length=1, max_length=1)
    label_column: Union[str, int] = Field(default=-1)
    categorical: List[str] = Field(default_factory=list)
    categories: Dict[str, List[str]] = Field(default_factory=dict)
    test_fraction: float = Field(default=1 / 3, gt=0, lt=1)
    split_seed: Optional[int] = Field(default=None)
    attack_subsample: Optional[int] = Field(default=None, ge=1)

    @field_validator("categories")
    @classmethod
    def unique_categories(cls, v: Dict[str, List[str]]) -> Dict[str, List[str]]:
        for name, labels in v.items():
            if len(set(labels)) != len(labels):
                raise ValueError(f"category labels of {name} must be unique")
        return v


class ModelSpec(BaseModel):
    """Which target model a campaign attacks."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["logistic", "tree", "linear_svm", "remote"] = Field(default="logistic")
    name: Optional[str] = Field(default=None)
    train: TrainConfig = Field(default_factory=TrainConfig)
    remote: Optional[RemoteModelConfig] = Field(default=None)

    @model_validator(mode="after")
    def remote_needs_endpoint(self) -> "ModelSpec":
        if self.kind == "remote" and self.remote is None:
            raise ValueError("kind 'remote' requires a remote section")
        return self

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.kind == "remote" and self.remote is not None:
            return self.remote.name
        return self.kind


class ExplainConfig(BaseModel):
    """Which rows are explained to build the conversion table."""

    model_config = ConfigDict(extra="forbid")

    split: Literal["train", "test", "all"] = Field(default="all")
    max_instances: Optional[int] = Field(default=None, ge=1)


class RunConfig(BaseModel):
    """Complete description of a reproducible campaign."""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="campaign", min_length=1)
    seed: int = Field(default=42)
    dataset: DatasetConfig
    model: ModelSpec = Field(default_factory=ModelSpec)
    shap: ShapConfig = Field(default_factory=ShapConfig)
    explain: ExplainConfig = Field(default_factory=ExplainConfig)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    neutral_band: float = Field(default=1e-9, ge=0)
    conversion_fallback: bool = Field(default=True)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    search: EpsilonSearchConfig = Field(default_factory=EpsilonSearchConfig)
    epsilons: List[float] = Field(default_factory=lambda: [0.3, 0.4, 0.5, 0.6])
    output_dir: Optional[Path] = Field(default=None)
    workers: Optional[int] = Field(default=None, ge=1)

    @field_validator("epsilons")
    @classmethod
    def check_epsilons(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("epsilon list must not be empty")
        if any(not (0.0 < e <= 1.0) for e in v):
            raise ValueError("every epsilon must lie in (0, 1]")
        return v

    @model_validator(mode="after")
    def fan_out_seeds(self) -> "RunConfig":
        if self.dataset.split_seed is None:
            self.dataset.split_seed = self.seed
        if "seed" not in self.model.train.model_fields_set:
            self.model.train.seed = derive_seed(self.seed, "train")
        if "seed" not in self.shap.model_fields_set:
            self.shap.seed = derive_seed(self.seed, "shap")
        # the attack pass categorises with the campaign thresholds
        if "thresholds" not in self.attack.model_fields_set:
            self.attack.thresholds = self.thresholds
        return self

    @property
    def subsample_seed(self) -> int:
        return derive_seed(self.seed, "subsample")

    @property
    def background_seed(self) -> int:
        return derive_seed(self.seed, "background")

    def resolve_paths(self, base: Path) -> "RunConfig":
        """Resolve relative dataset paths against the config file's directory."""
        if not self.dataset.path.is_absolute():
            self.dataset.path = (base / self.dataset.path).resolve()
        if self.output_dir is not None and not self.output_dir.is_absolute():
            self.output_dir = (base / self.output_dir).resolve()
        return self
