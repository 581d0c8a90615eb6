"""Pydantic request/response models for the render service."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, Field, field_validator

MAX_DIM = 1024
MIN_DIM = 16


class CameraModel(BaseModel):
    position: list[float] = Field(min_length=3, max_length=3)
    target: list[float] = Field(min_length=3, max_length=3)
    up: list[float] = Field(default=[0.0, 0.0, 1.0], min_length=3, max_length=3)
    fov_deg: float = Field(default=55.0, gt=10.0, lt=140.0)
    width: int = Field(default=256, ge=MIN_DIM, le=MAX_DIM)
    height: int = Field(default=256, ge=MIN_DIM, le=MAX_DIM)

    @field_validator("position", "target", "up")
    @classmethod
    def finite(cls, v):
        if not all(math.isfinite(x) for x in v):
            raise ValueError("camera vectors must be finite")
        return v


class RenderRequest(BaseModel):
    camera: CameraModel
    light_dir: list[float] = Field(min_length=3, max_length=3)
    frame: Literal["world", "camera"] = "world"
    latent: str = "mean"

    @field_validator("light_dir")
    @classmethod
    def normalizable(cls, v):
        n = math.sqrt(sum(x * x for x in v))
        if not math.isfinite(n) or n < 1e-8:
            raise ValueError("light_dir must be normalizable")
        return [x / n for x in v]


class SceneInfo(BaseModel):
    id: str
    name: str
    splat_count: int
    default_camera: dict
    bounds: dict


class LightsResponse(BaseModel):
    directions: list[list[float]]
    unlit_available: bool


class ErrorBody(BaseModel):
    error: str
