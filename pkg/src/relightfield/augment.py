"""Turn a single-illumination capture into an 18-direction multi-light dataset.

For every view, each of the 18 camera-local directions is relit from the
frontal capture flash, the 18-image stack is color-matched against the
original view, and world-frame light directions are attached via the view's
camera-to-world rotation. Relighting calls may run concurrently (bounded by
`concurrency`); results are serialized in (view, light) order so output is
deterministic regardless of completion order. When an output directory is
given, finished views are recorded in the manifest and skipped on resume.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .colorspace import match_stats_joint
from .datasets import (
    NUM_LIGHTS,
    MultiLightDataset,
    MultiViewDataset,
    load_image_u8,
    read_manifest,
    save_image_u8,
    write_manifest,
)
from .directions import Direction, Frame, save_direction_set, to_world
from .errors import AugmentError, RelightFieldError
from .relighters import RelightContext, RelighterKind, RelighterSpec, relight
from .shading import DEFAULT_AMBIENT, normals_from_depth
from .synth import FRONTAL_DIR


def scene_bounds(dataset: MultiViewDataset):
    """(center, radius) from SfM points, falling back to camera positions."""
    pts = dataset.sfm_points
    if pts is None or len(pts) == 0:
        pts = np.stack([v.pose.position for v in dataset.views])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = float(max(np.linalg.norm(hi - lo) / 2.0, 1e-6))
    return center, radius


def relight_context_for(dataset: MultiViewDataset, view, ambient: float | None = None) -> RelightContext:
    """Flash-geometry context for one view, honoring recorded capture metadata."""
    center, radius = scene_bounds(dataset)
    if "center" in dataset.meta:
        center = np.asarray(dataset.meta["center"], dtype=np.float64)
    if "radius" in dataset.meta:
        radius = float(dataset.meta["radius"])
    if ambient is None:
        ambient = float(dataset.meta.get("ambient", DEFAULT_AMBIENT))
    return RelightContext(pose=view.pose, scene_center=center, scene_radius=radius,
                          ambient=ambient)


def augment(dataset: MultiViewDataset, spec: RelighterSpec, dirs,
            color_match: bool = True, out_dir=None, concurrency: int = 1,
            ambient: float | None = None, retries: int = 0) -> MultiLightDataset:
    dirs = np.asarray(dirs, dtype=np.float64)
    if dirs.shape != (NUM_LIGHTS, 3):
        raise ValueError(f"expected {NUM_LIGHTS} camera-local directions, got {dirs.shape}")
    if not dataset.views:
        raise ValueError("dataset has no views")

    relit = {}
    world_dirs = {}

    done = {}
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "relit"), exist_ok=True)
        if os.path.exists(os.path.join(out_dir, "manifest.json")):
            done = read_manifest(out_dir).get("relit_done", {})
        save_direction_set(dirs, os.path.join(out_dir, "directions.json"))

    for view in dataset.views:
        for k in range(NUM_LIGHTS):
            d = to_world(Direction(dirs[k], Frame.CAMERA), view.pose.rotation)
            world_dirs[(view.id, k)] = d.v

        if out_dir is not None and done.get(view.id):
            for k in range(NUM_LIGHTS):
                relit[(view.id, k)] = load_image_u8(os.path.join(out_dir, "relit", f"{view.id}_{k:02d}.png"))
            continue

        normals = view.normals
        if normals is None and view.depth is not None and spec.kind is RelighterKind.ORACLE:
            normals = normals_from_depth(view.depth, view.pose)
        ctx = relight_context_for(dataset, view, ambient=ambient)

        def one(k):
            return relight(spec, view.image, view.depth, normals, dirs[k], FRONTAL_DIR,
                           ctx=ctx, retries=retries)

        try:
            if concurrency > 1:
                with ThreadPoolExecutor(max_workers=concurrency) as pool:
                    stack = list(pool.map(one, range(NUM_LIGHTS)))
            else:
                stack = [one(k) for k in range(NUM_LIGHTS)]
        except RelightFieldError as e:
            raise AugmentError(f"relighting failed for view {view.id}: {e}",
                               view_id=view.id) from e

        if color_match:
            stack = match_stats_joint(stack, view.image)
        for k in range(NUM_LIGHTS):
            relit[(view.id, k)] = stack[k]

        if out_dir is not None:
            for k in range(NUM_LIGHTS):
                save_image_u8(stack[k], os.path.join(out_dir, "relit", f"{view.id}_{k:02d}.png"))
            done[view.id] = True
            write_manifest(out_dir, {"relit_done": done, "color_match": color_match})

    out = MultiLightDataset(base=dataset, light_dirs_camera=dirs, relit=relit,
                            light_dirs_world=world_dirs)
    out.validate()
    return out


def save_multilight(ml: MultiLightDataset, root):
    """Write base capture plus relit images (e.g. synthetic ground truth)."""
    from .datasets import save_multiview

    ml.validate()
    save_multiview(ml.base, root)
    os.makedirs(os.path.join(root, "relit"), exist_ok=True)
    save_direction_set(ml.light_dirs_camera, os.path.join(root, "directions.json"))
    done = {}
    for v in ml.base.views:
        for k in range(NUM_LIGHTS):
            save_image_u8(ml.relit[(v.id, k)], os.path.join(root, "relit", f"{v.id}_{k:02d}.png"))
        done[v.id] = True
    extra = {"relit_done": done}
    if ml.base.meta:
        extra["scene_meta"] = ml.base.meta
    write_manifest(root, extra)


def load_multilight(root, dataset: MultiViewDataset | None = None) -> MultiLightDataset:
    """Reassemble an augmented dataset from disk."""
    from .datasets import load_multiview
    from .directions import load_direction_set

    if dataset is None:
        dataset = load_multiview(root)
    dirs, frame = load_direction_set(os.path.join(root, "directions.json"))
    if frame is not Frame.CAMERA:
        raise ValueError("augmentation direction sets live in the camera frame")
    relit = {}
    world_dirs = {}
    for view in dataset.views:
        for k in range(NUM_LIGHTS):
            relit[(view.id, k)] = load_image_u8(os.path.join(root, "relit", f"{view.id}_{k:02d}.png"))
            d = to_world(Direction(dirs[k], Frame.CAMERA), view.pose.rotation)
            world_dirs[(view.id, k)] = d.v
    out = MultiLightDataset(base=dataset, light_dirs_camera=dirs, relit=relit,
                            light_dirs_world=world_dirs)
    out.validate()
    return out
