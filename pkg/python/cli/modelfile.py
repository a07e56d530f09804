"""Model files and CLI settings for mpbridge."""

import os
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator

from mpbridge.exceptions import ValidationError
from mpbridge.rational import RationalModel
from mpbridge.tasep import TasepParams

CONFIG_ENV_VAR = "MPBRIDGE_CONFIG"


class ExplicitSection(BaseModel):
    """Per-symbol row-major matrices with optional boundary vectors."""

    alphabet_size: int = Field(ge=1)
    matrices: list[list[list[float]]]
    x: list[float] | None = None
    y: list[float] | None = None

    @field_validator("x", "y")
    @classmethod
    def _check_boundary_vector(
        cls, vec: list[float] | None, info: ValidationInfo
    ) -> list[float] | None:
        if vec is None:
            return vec
        if any(v < 0 for v in vec):
            raise ValueError(f"{info.field_name} has a negative entry")
        if not any(v > 0 for v in vec):
            raise ValueError(f"{info.field_name} must have a positive entry")
        return vec

    @model_validator(mode="after")
    def _check_shapes(self) -> "ExplicitSection":
        if len(self.matrices) != self.alphabet_size:
            raise ValueError(
                f"expected {self.alphabet_size} matrices (one per symbol), "
                f"got {len(self.matrices)}"
            )
        dim = len(self.matrices[0])
        for a, grid in enumerate(self.matrices):
            if len(grid) != dim or any(len(row) != dim for row in grid):
                raise ValueError(f"matrix {a} must be {dim}x{dim} like matrix 0")
            if any(v < 0 for row in grid for v in row):
                raise ValueError(f"matrix {a} has a negative entry")
        for name in ("x", "y"):
            vec = getattr(self, name)
            if vec is not None and len(vec) != dim:
                raise ValueError(f"{name} must have length {dim}")
        return self


class TasepSection(BaseModel):
    alpha: float = Field(gt=0, le=1)
    beta: float = Field(gt=0, le=1)

    @model_validator(mode="after")
    def _check_region(self) -> "TasepSection":
        if self.alpha + self.beta <= 1:
            raise ValueError("alpha + beta must exceed 1 (a*b < 1)")
        return self


class ModelFile(BaseModel):
    """A rational model given explicitly or as TASEP boundary rates."""

    type: Literal["explicit", "tasep"]
    explicit: ExplicitSection | None = None
    tasep: TasepSection | None = None

    @model_validator(mode="after")
    def _check_section(self) -> "ModelFile":
        if getattr(self, self.type) is None:
            raise ValueError(f"type '{self.type}' needs a '{self.type}' section")
        return self

    def build(self, N: int = 1) -> RationalModel | TasepParams:
        if self.type == "tasep":
            assert self.tasep is not None
            return TasepParams(self.tasep.alpha, self.tasep.beta, N)
        assert self.explicit is not None
        return RationalModel.from_lists(
            [np.asarray(m) for m in self.explicit.matrices], self.explicit.x, self.explicit.y
        )


class Settings(BaseModel):
    """Defaults of the global numeric flags."""

    seed: int = 0
    bins: int = Field(default=100, ge=1)
    grid: int = Field(default=1000, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    bmax: int | None = None
    enumerate_cap: int = Field(default=20, ge=1, le=20)
    workers: int = Field(default=8, ge=1)
    log_level: str = "INFO"

    @field_validator("bmax", mode="before")
    @classmethod
    def _auto_bmax(cls, value: Any) -> Any:
        return None if value == "auto" else value


def _first_error(exc: pydantic.ValidationError) -> str:
    error = exc.errors()[0]
    location = ".".join(str(part) for part in error["loc"]) or "document"
    return f"{location}: {error['msg']}"


def _read_yaml(path: Path) -> Any:
    try:
        return yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ValidationError(f"{path}: not valid YAML ({e})") from None
    except OSError as e:
        raise ValidationError(f"{path}: {e.strerror}") from None


def load_model_file(path: str | Path) -> ModelFile:
    """Parse and validate a YAML model file.

    Raises:
        ValidationError: Naming the offending field when the file is invalid.
    """
    document = _read_yaml(Path(path))
    try:
        return ModelFile.model_validate(document)
    except pydantic.ValidationError as e:
        raise ValidationError(f"model file {path}: {_first_error(e)}") from None


def load_settings(path: str | Path | None = None) -> Settings:
    """Settings from --config, then $MPBRIDGE_CONFIG, then built-in defaults.

    The file layout matches config.yaml: a `defaults` mapping and a
    `logging.level` entry.
    """
    chosen = path or os.environ.get(CONFIG_ENV_VAR)
    if not chosen:
        return Settings()
    document = _read_yaml(Path(chosen)) or {}
    values = dict(document.get("defaults") or {})
    level = (document.get("logging") or {}).get("level")
    if level:
        values["log_level"] = level
    try:
        return Settings.model_validate(values)
    except pydantic.ValidationError as e:
        raise ValidationError(f"config {chosen}: {_first_error(e)}") from None
