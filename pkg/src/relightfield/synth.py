"""Synthetic Lambertian test scenes with exact geometry and 18-light ground truth.

A tiny ray tracer over axis-aligned boxes and spheres renders every view
under a camera-mounted flash for each light direction (plus the frontal
capture flash), producing a single-illumination dataset, its full
multi-illumination ground truth, exact depth/normal maps, and uniform
surface samples standing in for SfM points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import (
    NUM_LIGHTS,
    CameraPose,
    MultiLightDataset,
    MultiViewDataset,
    View,
    look_at,
)
from .directions import Direction, Frame, default_light_grid, to_world
from .errors import UnknownPresetError
from .shading import DEFAULT_AMBIENT, flash_position, flash_shade

FRONTAL_DIR = np.array([0.0, 0.0, 1.0])

_EPS = 1e-9


@dataclass(frozen=True)
class _Box:
    lo: np.ndarray
    hi: np.ndarray
    albedo: np.ndarray
    inner: bool = False  # True: rays hit the inside faces (room shell)

    def intersect(self, origins, dirs):
        safe = np.where(np.abs(dirs) < _EPS, _EPS, dirs)
        t1 = (self.lo - origins) / safe
        t2 = (self.hi - origins) / safe
        t_near = np.minimum(t1, t2)
        t_far = np.maximum(t1, t2)
        enter = t_near.max(axis=-1)
        exit_ = t_far.min(axis=-1)
        if self.inner:
            t = exit_
            axis = t_far.argmin(axis=-1)
            valid = (exit_ > 1e-6) & (enter <= exit_)
            sign = -np.sign(np.take_along_axis(dirs, axis[..., None], axis=-1))[..., 0]
        else:
            t = enter
            axis = t_near.argmax(axis=-1)
            valid = (enter > 1e-6) & (enter <= exit_)
            sign = -np.sign(np.take_along_axis(dirs, axis[..., None], axis=-1))[..., 0]
        normals = np.zeros(origins.shape[:-1] + (3,))
        idx = np.arange(3)[None, :] == axis[..., None]
        normals[idx] = np.broadcast_to(sign[..., None], normals.shape)[idx]
        return np.where(valid, t, np.inf), normals

    def sample_surface(self, rng, count):
        # area-weighted over faces; inner shells expose their inside, so the
        # sampled geometry is identical either way
        ext = self.hi - self.lo
        areas = np.array([ext[1] * ext[2], ext[1] * ext[2], ext[0] * ext[2],
                          ext[0] * ext[2], ext[0] * ext[1], ext[0] * ext[1]])
        face = rng.choice(6, size=count, p=areas / areas.sum())
        u = rng.uniform(size=(count, 3))
        pts = self.lo + u * ext
        axis = face // 2
        side = face % 2
        pts[np.arange(count), axis] = np.where(side == 0, self.lo[axis], self.hi[axis])
        return pts


@dataclass(frozen=True)
class _Sphere:
    center: np.ndarray
    radius: float
    albedo: np.ndarray

    def intersect(self, origins, dirs):
        oc = origins - self.center
        b = np.sum(oc * dirs, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t = -b - sq
        t2 = -b + sq
        t = np.where(t > 1e-6, t, t2)
        valid = (disc > 0.0) & (t > 1e-6)
        pts = origins + t[..., None] * dirs
        normals = (pts - self.center) / self.radius
        return np.where(valid, t, np.inf), normals

    def sample_surface(self, rng, count):
        v = rng.normal(size=(count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.center + self.radius * v


@dataclass
class _Preset:
    primitives: list
    center: np.ndarray
    radius: float
    cam_distance: float
    cam_elevation_deg: float
    cam_azimuth_span_deg: float
    cam_base_azimuth_deg: float
    fov_deg: float


def _gray(v):
    return np.array([v, v, v])


def _build_preset(name: str) -> _Preset:
    if name == "cornell":
        room = _Box(np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]), _gray(0.72), inner=True)
        # paint the side walls by overlaying thin colored slabs
        left = _Box(np.array([-1.0, 0.995, -1.0]), np.array([1.0, 1.0, 1.0]), np.array([0.75, 0.22, 0.2]))
        right = _Box(np.array([-1.0, -1.0, -1.0]), np.array([1.0, -0.995, 1.0]), np.array([0.22, 0.68, 0.2]))
        box = _Box(np.array([-0.62, -0.55, -1.0]), np.array([-0.18, -0.12, -0.28]), np.array([0.3, 0.42, 0.75]))
        ball = _Sphere(np.array([-0.42, 0.38, -0.7]), 0.3, np.array([0.8, 0.7, 0.3]))
        return _Preset([room, left, right, box, ball], np.array([-0.2, 0.0, -0.35]), 1.0,
                       cam_distance=1.05, cam_elevation_deg=12.0, cam_azimuth_span_deg=72.0,
                       cam_base_azimuth_deg=0.0, fov_deg=62.0)
    if name == "plane":
        # wall facing the +x camera arc; fronto-parallel at azimuth 0
        wall = _Box(np.array([-0.2, -6.0, -6.0]), np.array([0.0, 6.0, 6.0]), _gray(0.7))
        return _Preset([wall], np.array([0.0, 0.0, 0.0]), 1.0,
                       cam_distance=2.5, cam_elevation_deg=0.0, cam_azimuth_span_deg=30.0,
                       cam_base_azimuth_deg=0.0, fov_deg=50.0)
    if name == "spheres":
        room = _Box(np.array([-1.2, -1.2, -0.8]), np.array([1.2, 1.2, 1.2]), _gray(0.7), inner=True)
        s1 = _Sphere(np.array([-0.45, -0.35, -0.45]), 0.35, np.array([0.75, 0.3, 0.25]))
        s2 = _Sphere(np.array([-0.3, 0.45, -0.55]), 0.25, np.array([0.25, 0.4, 0.75]))
        s3 = _Sphere(np.array([0.1, 0.05, -0.62]), 0.18, np.array([0.75, 0.65, 0.25]))
        return _Preset([room, s1, s2, s3], np.array([-0.15, 0.0, -0.3]), 1.0,
                       cam_distance=1.15, cam_elevation_deg=18.0, cam_azimuth_span_deg=70.0,
                       cam_base_azimuth_deg=0.0, fov_deg=60.0)
    raise UnknownPresetError(f"unknown preset {name!r}; choose cornell, plane, or spheres")


def _trace(preset: _Preset, pose: CameraPose):
    dirs = pose.ray_directions().reshape(-1, 3)
    origins = np.broadcast_to(pose.position, dirs.shape)
    best_t = np.full(dirs.shape[0], np.inf)
    normals = np.zeros_like(dirs)
    albedo = np.zeros_like(dirs)
    for prim in preset.primitives:
        t, n = prim.intersect(origins, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        normals[closer] = n[closer]
        albedo[closer] = prim.albedo
    h, w = pose.height, pose.width
    pts = origins + best_t[:, None] * dirs
    # forward z (camera-space depth), not euclidean range
    fwd = -pose.rotation.m[:, 2]
    depth = np.sum((pts - pose.position) * fwd, axis=-1)
    return (
        pts.reshape(h, w, 3),
        normals.reshape(h, w, 3),
        albedo.reshape(h, w, 3),
        depth.reshape(h, w),
    )


def _shade_view(preset, pose, pts, normals, albedo, dir_camera, ambient):
    fp = flash_position(pose, dir_camera, preset.radius)
    s = flash_shade(pts, normals, fp, preset.center, ambient)
    return np.clip(albedo * s[..., None], 0.0, 1.0)


def preset_cameras(preset_name, n_views, size, interleaved=0):
    """Poses on an arc around the preset's center of interest.

    With interleaved > 0, returns (train, test) where test poses sit at the
    midpoints of the central training gaps — novel but in-distribution views.
    """
    p = _build_preset(preset_name)
    span = np.radians(p.cam_azimuth_span_deg)
    base = np.radians(p.cam_base_azimuth_deg)
    azimuths = base + (np.linspace(-0.5, 0.5, n_views) * span if n_views > 1 else np.zeros(1))
    elev = np.radians(p.cam_elevation_deg)

    def pose_at(az):
        offset = p.cam_distance * np.array(
            [np.cos(elev) * np.cos(az), np.cos(elev) * np.sin(az), np.sin(elev)]
        )
        return look_at(p.center + offset, p.center, up=(0, 0, 1), fov_deg=p.fov_deg,
                       width=size, height=size)

    train = [pose_at(az) for az in azimuths]
    if interleaved <= 0:
        return train, []
    mids = 0.5 * (azimuths[:-1] + azimuths[1:])
    pick = mids[np.linspace(0, len(mids) - 1, interleaved).round().astype(int)] if len(mids) else []
    test = [pose_at(az) for az in pick]
    return train, test


def synth_scene(preset: str, n_views: int, size: int, seed: int = 0, n_points: int = 1600,
                ambient: float = DEFAULT_AMBIENT, poses=None, id_prefix: str = "view"):
    """Render a preset: returns (single-light capture, full ground truth)."""
    p = _build_preset(preset)
    if poses is None:
        poses, _ = preset_cameras(preset, n_views, size)
    rng = np.random.default_rng(seed)
    light_grid = default_light_grid()

    views = []
    relit = {}
    world_dirs = {}
    for i, pose in enumerate(poses):
        vid = f"{id_prefix}{i:03d}"
        pts, normals, albedo, depth = _trace(p, pose)
        image = _shade_view(p, pose, pts, normals, albedo, FRONTAL_DIR, ambient)
        views.append(View(id=vid, image=image, pose=pose, depth=depth, normals=normals))
        for k in range(NUM_LIGHTS):
            relit[(vid, k)] = _shade_view(p, pose, pts, normals, albedo, light_grid[k], ambient)
            d = to_world(Direction(light_grid[k], Frame.CAMERA), pose.rotation)
            world_dirs[(vid, k)] = d.v

    sfm = _sample_visible_surface(p, poses, views, rng, n_points)

    meta = {"preset": preset, "center": [float(c) for c in p.center], "radius": p.radius,
            "ambient": ambient}
    base = MultiViewDataset(views=views, sfm_points=sfm, meta=meta)
    truth = MultiLightDataset(base=base, light_dirs_camera=light_grid, relit=relit,
                              light_dirs_world=world_dirs)
    return base, truth


def _sample_visible_surface(preset: _Preset, poses, views, rng, n_points):
    """Uniform surface samples kept only if some view sees them un-occluded,
    which is what an SfM point cloud of the capture would contain."""
    depth_maps = [v.depth for v in views]
    kept = []
    total = 0
    for _ in range(12):
        counts = np.maximum(
            (np.ones(len(preset.primitives)) * 4 * n_points / len(preset.primitives)).astype(int), 1
        )
        cand = np.concatenate(
            [prim.sample_surface(rng, int(c)) for prim, c in zip(preset.primitives, counts)], axis=0
        )
        visible = np.zeros(len(cand), dtype=bool)
        for pose, dmap in zip(poses, depth_maps):
            uv, z = pose.project(cand)
            col = np.floor(uv[:, 0]).astype(int)
            row = np.floor(uv[:, 1]).astype(int)
            inside = (
                (z > 1e-6)
                & (col >= 0) & (col < pose.width)
                & (row >= 0) & (row < pose.height)
            )
            idx = np.flatnonzero(inside)
            seen = z[idx] <= dmap[row[idx], col[idx]] + 2e-3 * np.maximum(z[idx], 1.0)
            visible[idx[seen]] = True
        kept.append(cand[visible])
        total += int(visible.sum())
        if total >= n_points:
            break
    pts = np.concatenate(kept, axis=0)
    if len(pts) < 4:
        raise RuntimeError("surface sampling found too few camera-visible points")
    return pts[:n_points]


def preset_info(preset: str):
    p = _build_preset(preset)
    return {"center": p.center.tolist(), "radius": p.radius, "fov_deg": p.fov_deg}
