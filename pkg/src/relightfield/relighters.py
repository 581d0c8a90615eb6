"""Relighter backends: identity, the geometric ratio oracle, and a remote
HTTP relighting service.

The ratio oracle rescales each pixel by the flash-shading ratio between the
target and source light directions, using per-pixel positions reconstructed
from depth and supplied normals:

    out = clip(image * s(target) / max(s(source), eps), 0, 1)

Remote relighters speak a one-round-trip JSON protocol: POST {url}/relight
with {"image": b64 PNG, "depth": b64 16-bit PNG (millimeters) | null,
"target_dir": [x,y,z], "source_dir": [x,y,z]} and get {"image": b64 PNG}
back; non-200 responses carry {"error": "..."}.
"""

from __future__ import annotations

import base64
import enum
import io
from dataclasses import dataclass, field
from urllib.parse import urlparse

import numpy as np
import requests
from PIL import Image

from .datasets import DEPTH_SCALE, CameraPose
from .errors import MissingGeometryError, RemoteRelightError
from .shading import DEFAULT_AMBIENT, flash_position, flash_shade

RATIO_EPS = 1e-4


class RelighterKind(enum.Enum):
    IDENTITY = "identity"
    ORACLE = "oracle"
    REMOTE = "remote"


@dataclass(frozen=True)
class RelighterSpec:
    kind: RelighterKind
    url: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind is RelighterKind.REMOTE:
            parsed = urlparse(self.url)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise ValueError(f"remote relighter needs a valid http(s) URL, got {self.url!r}")

    @staticmethod
    def parse(text: str) -> "RelighterSpec":
        """'identity' | 'oracle' | a http(s) URL."""
        if text in ("identity", "oracle"):
            return RelighterSpec(RelighterKind(text))
        return RelighterSpec(RelighterKind.REMOTE, url=text)


@dataclass(frozen=True)
class RelightContext:
    """Per-view geometry the oracle flash model needs."""

    pose: CameraPose
    scene_center: np.ndarray
    scene_radius: float
    ambient: float = DEFAULT_AMBIENT


def _png_b64(img) -> str:
    arr = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _b64_png(data: str):
    with Image.open(io.BytesIO(base64.b64decode(data))) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _depth_b64(depth) -> str:
    q = np.clip(np.round(np.asarray(depth) * DEPTH_SCALE), 0, 65535).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _oracle(image, depth, normals, target, source, ctx: RelightContext):
    if depth is None or normals is None:
        raise MissingGeometryError("ratio oracle needs per-pixel depth and normals")
    pts = ctx.pose.unproject(depth)
    s_target = flash_shade(pts, normals, flash_position(ctx.pose, target, ctx.scene_radius),
                           ctx.scene_center, ctx.ambient)
    s_source = flash_shade(pts, normals, flash_position(ctx.pose, source, ctx.scene_radius),
                           ctx.scene_center, ctx.ambient)
    ratio = s_target / np.maximum(s_source, RATIO_EPS)
    return np.clip(image * ratio[..., None], 0.0, 1.0)


def _remote(spec: RelighterSpec, image, depth, target, source, retries: int = 0):
    body = {
        "image": _png_b64(image),
        "depth": _depth_b64(depth) if depth is not None else None,
        "target_dir": [float(x) for x in target],
        "source_dir": [float(x) for x in source],
    }
    url = spec.url.rstrip("/") + "/relight"
    timeout = float(spec.options.get("timeout", "300"))
    last = None
    for _ in range(retries + 1):
        try:
            resp = requests.post(url, json=body, timeout=timeout)
        except requests.RequestException as e:
            last = RemoteRelightError(f"transport failure talking to {url}: {e}")
            continue
        if resp.status_code != 200:
            try:
                detail = resp.json().get("error", resp.text)
            except ValueError:
                detail = resp.text
            last = RemoteRelightError(f"relight service returned {resp.status_code}: {detail}",
                                      status=resp.status_code)
            continue
        try:
            return _b64_png(resp.json()["image"])
        except (ValueError, KeyError) as e:
            last = RemoteRelightError(f"malformed relight response: {e}")
            continue
    raise last


def relight(spec: RelighterSpec, image, depth, normals, target, source,
            ctx: RelightContext | None = None, retries: int = 0):
    """Produce image relit from its source flash direction to the target one.

    Directions are camera-local unit vectors. The oracle additionally needs a
    RelightContext for its flash geometry.
    """
    image = np.asarray(image, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    if spec.kind is RelighterKind.IDENTITY:
        return image
    if spec.kind is RelighterKind.ORACLE:
        if ctx is None:
            raise MissingGeometryError("ratio oracle needs a RelightContext")
        return _oracle(image, depth, normals, target, source, ctx)
    return _remote(spec, image, depth, target, source, retries=retries)
