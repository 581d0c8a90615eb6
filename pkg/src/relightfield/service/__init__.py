from .app import SceneRegistry, create_app
from .models import CameraModel, LightsResponse, RenderRequest, SceneInfo

__all__ = [
    "CameraModel",
    "LightsResponse",
    "RenderRequest",
    "SceneInfo",
    "SceneRegistry",
    "create_app",
]
