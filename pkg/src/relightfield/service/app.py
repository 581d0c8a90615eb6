"""HTTP render service: immutable scene snapshots behind a small FastAPI app.

Scenes are .rlf files in a directory, loaded read-only; the registry swaps
snapshots atomically when files change, so in-flight requests keep whatever
snapshot they started with. Renders per scene are bounded by a semaphore.
"""

from __future__ import annotations

import io
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from PIL import Image

from ..datasets import look_at
from ..directions import Direction, Frame, sh_basis, to_world
from ..render import render
from ..scenefile import load_scene
from ..splats import SplatScene
from .models import LightsResponse, RenderRequest, SceneInfo


@dataclass
class _Entry:
    scene: SplatScene
    mtime_ns: int
    size: int
    gate: threading.Semaphore


class SceneRegistry:
    """Directory-backed, hot-reloading scene table."""

    def __init__(self, directory, max_concurrent: int = 2):
        self.directory = str(directory)
        self.max_concurrent = max_concurrent
        self._lock = threading.Lock()
        self._entries: dict[str, _Entry] = {}
        self.refresh()

    def refresh(self):
        found = {}
        if os.path.isdir(self.directory):
            for name in sorted(os.listdir(self.directory)):
                if name.endswith(".rlf"):
                    found[name[:-4]] = os.path.join(self.directory, name)
        with self._lock:
            table = dict(self._entries)
            for scene_id, path in found.items():
                st = os.stat(path)
                cur = table.get(scene_id)
                if cur is None or cur.mtime_ns != st.st_mtime_ns or cur.size != st.st_size:
                    table[scene_id] = _Entry(
                        scene=load_scene(path),
                        mtime_ns=st.st_mtime_ns,
                        size=st.st_size,
                        gate=threading.Semaphore(self.max_concurrent),
                    )
            for scene_id in list(table):
                if scene_id not in found:
                    del table[scene_id]
            self._entries = table

    def ids(self):
        with self._lock:
            return sorted(self._entries)

    def get(self, scene_id) -> _Entry:
        with self._lock:
            entry = self._entries.get(scene_id)
        if entry is None:
            path = os.path.join(self.directory, scene_id + ".rlf")
            if os.path.exists(path):
                # a file we have not ingested yet: load off-request and ask
                # the client to retry
                threading.Thread(target=self.refresh, daemon=True).start()
                raise HTTPException(status_code=503, detail=f"scene {scene_id!r} is still loading")
            raise HTTPException(status_code=404, detail=f"unknown scene {scene_id!r}")
        return entry


def _scene_info(scene_id: str, scene: SplatScene) -> SceneInfo:
    lo, hi = scene.bounds()
    return SceneInfo(
        id=scene_id,
        name=scene.meta.get("name", scene_id),
        splat_count=scene.splat_count,
        default_camera=scene.meta.get("default_camera", {}),
        bounds={"min": [float(x) for x in lo], "max": [float(x) for x in hi]},
    )


def create_app(scene_dir, max_concurrent: int = 2, cors_origin: str = "") -> FastAPI:
    app = FastAPI(title="relightfield render service")
    registry = SceneRegistry(scene_dir, max_concurrent=max_concurrent)
    app.state.registry = registry

    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.get("/api/scenes", response_model=list[SceneInfo])
    def list_scenes():
        registry.refresh()
        return [_scene_info(sid, registry.get(sid).scene) for sid in registry.ids()]

    @app.get("/api/scenes/{scene_id}/lights", response_model=LightsResponse)
    def scene_lights(scene_id: str):
        scene = registry.get(scene_id).scene
        dirs = scene.meta.get("light_dirs_camera", [])
        return LightsResponse(directions=dirs, unlit_available=bool(scene.meta.get("unlit_available")))

    @app.post("/api/scenes/{scene_id}/render")
    def render_scene(scene_id: str, req: RenderRequest):
        entry = registry.get(scene_id)
        scene = entry.scene
        cam = look_at(
            req.camera.position,
            req.camera.target,
            up=tuple(req.camera.up),
            fov_deg=req.camera.fov_deg,
            width=req.camera.width,
            height=req.camera.height,
        )
        light = Direction(np.asarray(req.light_dir), Frame(req.frame))
        if light.frame is Frame.CAMERA:
            light = to_world(light, cam.rotation)
        if req.latent == "mean":
            latent = scene.mean_latent() if len(scene.latents) else None
        else:
            if req.latent not in scene.latent_ids:
                raise HTTPException(
                    status_code=422,
                    detail=f"latent: unknown training view {req.latent!r}",
                )
            latent = scene.latent_for(req.latent)
        with entry.gate:
            start = time.perf_counter()
            out = render(scene, cam, light, latent)
            millis = (time.perf_counter() - start) * 1000.0
        arr = np.clip(np.round(out.color * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={"X-Render-Millis": f"{millis:.2f}"},
        )

    return app
