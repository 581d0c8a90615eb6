"""Camera-mounted flash shading shared by the synthetic renderer and the
ratio relighter.

The flash is a virtual point light placed a quarter scene radius away from
the camera along the (camera-local) light direction, with inverse-square
falloff normalized to 1 at the scene center. Shading is clamped Lambertian
over a constant ambient floor:

    s = clip(ambient + (1 - ambient) * max(n . l_eff, 0) * falloff, 0, 1)

Keeping this in one place is what makes ratio relighting of the synthetic
scenes exact: both sides evaluate the same s.
"""

from __future__ import annotations

import numpy as np

from .datasets import CameraPose

FLASH_OFFSET = 0.25
DEFAULT_AMBIENT = 0.3


def flash_position(pose: CameraPose, dir_camera, scene_radius: float):
    """World-space flash location for a camera-local light direction."""
    d = np.asarray(dir_camera, dtype=np.float64)
    return pose.position + FLASH_OFFSET * scene_radius * (pose.rotation.m @ d)


def flash_shade(points, normals, flash_pos, scene_center, ambient=DEFAULT_AMBIENT):
    """Per-point shading factor s in [0, 1]; points/normals in world frame."""
    to_light = flash_pos - points
    dist2 = np.sum(to_light * to_light, axis=-1)
    dist2 = np.maximum(dist2, 1e-12)
    l_eff = to_light / np.sqrt(dist2)[..., None]
    lambert = np.maximum(np.sum(normals * l_eff, axis=-1), 0.0)
    ref2 = float(np.sum((flash_pos - np.asarray(scene_center)) ** 2))
    falloff = ref2 / dist2
    return np.clip(ambient + (1.0 - ambient) * lambert * falloff, 0.0, 1.0)


def normals_from_depth(depth, pose: CameraPose):
    """World-frame normals estimated from a depth map by central differences.

    Fallback for real captures that ship depth but no normal maps; synthetic
    data carries exact normals instead.
    """
    pts = pose.unproject(depth)
    dx = np.gradient(pts, axis=1)
    dy = np.gradient(pts, axis=0)
    n = np.cross(dy, dx)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    n = n / np.maximum(norm, 1e-12)
    # orient toward the camera
    to_cam = pose.position - pts
    flip = np.sum(n * to_cam, axis=-1) < 0.0
    n[flip] *= -1.0
    return n
