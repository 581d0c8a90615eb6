"""Posed image datasets and their on-disk layout.

Camera convention (pinned once, used everywhere): the stored rotation is
camera-to-world with camera axes x right, y up, z pointing from the scene
toward the camera — the same frame camera-local light directions live in.
Projection flips to the usual y-down/z-forward image frame internally, so
depth maps store positive forward z ("camera-space z").

Dataset directory layout::

    views/<id>.png          8-bit sRGB
    depth/<id>.png          optional, 16-bit, millimeter-quantized
    normals/<id>.npy        optional, float32 HxWx3 world-frame unit normals
    poses.json              intrinsics + 3x4 camera-to-world extrinsics per id
    points.ply              SfM (or surrogate) world points, ascii PLY
    directions.json         the augmentation light set, camera frame
    relit/<id>_<k>.png      augmented images, k = light index
    manifest.json           format version + completed-view bookkeeping
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .directions import Rotation3

DATASET_FORMAT = "relightfield-dataset"
DATASET_VERSION = 1
NUM_LIGHTS = 18

DEPTH_SCALE = 1000.0  # stored depth unit: millimeters at scene scale


@dataclass(frozen=True)
class CameraPose:
    rotation: Rotation3  # camera-to-world
    position: np.ndarray  # world, scene units
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64)
        if p.shape != (3,):
            raise ValueError("camera position must be a 3-vector")
        object.__setattr__(self, "position", p)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def world_to_cam(self, points):
        """World points -> y-down/z-forward camera coordinates (z > 0 in front)."""
        q = (np.asarray(points, dtype=np.float64) - self.position) @ self.rotation.m
        return q * np.array([1.0, -1.0, -1.0])

    def project(self, points):
        """World points -> (pixel xy, forward z). Pixels index centers at +0.5."""
        q = self.world_to_cam(points)
        z = q[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * q[..., 0] / z + self.cx
            v = self.fy * q[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1), z

    def unproject(self, depth):
        """Dense depth (HxW forward z) -> world points (HxWx3)."""
        d = np.asarray(depth, dtype=np.float64)
        h, w = d.shape
        u = np.arange(w) + 0.5
        v = np.arange(h) + 0.5
        x = (u[None, :] - self.cx) / self.fx * d
        y = (v[:, None] - self.cy) / self.fy * d
        cam = np.stack([x, -y, -d], axis=-1)  # back to the y-up/z-backward frame
        return cam @ self.rotation.m.T + self.position

    def ray_directions(self):
        """Unit world-space ray direction per pixel (HxWx3)."""
        u = np.arange(self.width) + 0.5
        v = np.arange(self.height) + 0.5
        x = (u[None, :] - self.cx) / self.fx
        y = (v[:, None] - self.cy) / self.fy
        cam = np.stack([np.broadcast_to(x, (self.height, self.width)),
                        -np.broadcast_to(y, (self.height, self.width)),
                        -np.ones((self.height, self.width))], axis=-1)
        d = cam @ self.rotation.m.T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


def look_at(position, target, up=(0.0, 0.0, 1.0), fov_deg=55.0, width=64, height=64) -> CameraPose:
    """Build a pose whose -z camera axis points from position to target."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    zc = position - target
    zn = np.linalg.norm(zc)
    if zn < 1e-9:
        raise ValueError("camera position coincides with target")
    zc = zc / zn
    xc = np.cross(up, zc)
    xn = np.linalg.norm(xc)
    if xn < 1e-9:
        raise ValueError("up vector is parallel to the view axis")
    xc = xc / xn
    yc = np.cross(zc, xc)
    rot = Rotation3(np.stack([xc, yc, zc], axis=1))
    fx = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return CameraPose(rotation=rot, position=position, fx=fx, fy=fx,
                      cx=width / 2.0, cy=height / 2.0, width=width, height=height)


@dataclass
class View:
    id: str
    image: np.ndarray  # HxWx3 sRGB in [0,1]
    pose: CameraPose
    depth: np.ndarray | None = None  # HxW forward z, scene units
    normals: np.ndarray | None = None  # HxWx3 world-frame


@dataclass
class MultiViewDataset:
    views: list[View] = field(default_factory=list)
    sfm_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    # capture metadata consumed downstream: scene center/radius (flash
    # geometry), ambient level, preset name
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [v.id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ValueError("view ids must be unique")
        for v in self.views:
            h, w = v.image.shape[:2]
            if (v.pose.width, v.pose.height) != (w, h):
                raise ValueError(f"view {v.id}: pose size disagrees with image")

    def view(self, view_id: str) -> View:
        for v in self.views:
            if v.id == view_id:
                return v
        raise KeyError(view_id)


@dataclass
class MultiLightDataset:
    """A capture augmented to NUM_LIGHTS directions per view."""

    base: MultiViewDataset
    light_dirs_camera: np.ndarray  # (18, 3), camera frame
    relit: dict = field(default_factory=dict)  # (view_id, light_idx) -> image
    light_dirs_world: dict = field(default_factory=dict)  # (view_id, light_idx) -> (3,)

    def validate(self):
        if self.light_dirs_camera.shape != (NUM_LIGHTS, 3):
            raise ValueError("expected exactly 18 camera-frame light directions")
        expected = {(v.id, k) for v in self.base.views for k in range(NUM_LIGHTS)}
        if set(self.relit.keys()) != expected:
            raise ValueError("relit map must hold exactly |views| x 18 entries")
        for v in self.base.views:
            for k in range(NUM_LIGHTS):
                want = v.pose.rotation.m @ self.light_dirs_camera[k]
                if np.linalg.norm(self.light_dirs_world[(v.id, k)] - want) > 1e-6:
                    raise ValueError(f"world light direction mismatch at ({v.id}, {k})")


# ---------------------------------------------------------------------------
# image / array codecs


def save_image_u8(img, path):
    arr = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_image_u8(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_depth_png(depth, path):
    q = np.clip(np.round(np.asarray(depth) * DEPTH_SCALE), 0, 65535).astype(np.uint16)
    Image.fromarray(q).save(path)


def load_depth_png(path):
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.float64) / DEPTH_SCALE


def save_points_ply(points, path):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(pts)}\n")
        f.write("property float x\nproperty float y\nproperty float z\nend_header\n")
        for p in pts:
            f.write(f"{p[0]:.7g} {p[1]:.7g} {p[2]:.7g}\n")


def load_points_ply(path):
    with open(path) as f:
        line = f.readline().strip()
        if line != "ply":
            raise ValueError(f"{path}: not a PLY file")
        count = 0
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: missing end_header")
            if line.startswith("element vertex"):
                count = int(line.split()[-1])
            if line.strip() == "end_header":
                break
        pts = np.loadtxt(f, max_rows=count, dtype=np.float64) if count else np.zeros((0, 3))
    return pts.reshape(-1, 3)


# ---------------------------------------------------------------------------
# dataset directory I/O


def _pose_to_json(pose: CameraPose):
    ext = np.concatenate([pose.rotation.m, pose.position[:, None]], axis=1)
    return {
        "width": pose.width,
        "height": pose.height,
        "fx": pose.fx,
        "fy": pose.fy,
        "cx": pose.cx,
        "cy": pose.cy,
        "extrinsic_c2w": [[float(x) for x in row] for row in ext],
    }


def _pose_from_json(doc) -> CameraPose:
    ext = np.asarray(doc["extrinsic_c2w"], dtype=np.float64)
    if ext.shape != (3, 4):
        raise ValueError("extrinsic must be 3x4 camera-to-world")
    return CameraPose(
        rotation=Rotation3(ext[:, :3]),
        position=ext[:, 3],
        fx=doc["fx"],
        fy=doc["fy"],
        cx=doc["cx"],
        cy=doc["cy"],
        width=doc["width"],
        height=doc["height"],
    )


def save_multiview(ds: MultiViewDataset, root):
    root = str(root)
    os.makedirs(os.path.join(root, "views"), exist_ok=True)
    poses = {"convention": "camera-to-world, x right, y up, z toward camera", "views": {}}
    for v in ds.views:
        save_image_u8(v.image, os.path.join(root, "views", f"{v.id}.png"))
        if v.depth is not None:
            os.makedirs(os.path.join(root, "depth"), exist_ok=True)
            save_depth_png(v.depth, os.path.join(root, "depth", f"{v.id}.png"))
        if v.normals is not None:
            os.makedirs(os.path.join(root, "normals"), exist_ok=True)
            np.save(os.path.join(root, "normals", f"{v.id}.npy"), v.normals.astype(np.float32))
        poses["views"][v.id] = _pose_to_json(v.pose)
    with open(os.path.join(root, "poses.json"), "w") as f:
        json.dump(poses, f, indent=2)
    save_points_ply(ds.sfm_points, os.path.join(root, "points.ply"))
    manifest_path = os.path.join(root, "manifest.json")
    extra = {"relit_done": {}}
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            extra["relit_done"] = json.load(f).get("relit_done", {})
    if ds.meta:
        extra["scene_meta"] = ds.meta
    write_manifest(root, extra)


def load_multiview(root) -> MultiViewDataset:
    root = str(root)
    with open(os.path.join(root, "poses.json")) as f:
        poses = json.load(f)
    views = []
    for view_id in sorted(poses["views"].keys()):
        pose = _pose_from_json(poses["views"][view_id])
        image = load_image_u8(os.path.join(root, "views", f"{view_id}.png"))
        depth_path = os.path.join(root, "depth", f"{view_id}.png")
        normals_path = os.path.join(root, "normals", f"{view_id}.npy")
        depth = load_depth_png(depth_path) if os.path.exists(depth_path) else None
        normals = np.load(normals_path).astype(np.float64) if os.path.exists(normals_path) else None
        views.append(View(id=view_id, image=image, pose=pose, depth=depth, normals=normals))
    pts_path = os.path.join(root, "points.ply")
    pts = load_points_ply(pts_path) if os.path.exists(pts_path) else np.zeros((0, 3))
    meta = {}
    if os.path.exists(os.path.join(root, "manifest.json")):
        meta = read_manifest(root).get("scene_meta", {})
    return MultiViewDataset(views=views, sfm_points=pts, meta=meta)


def write_manifest(root, extra=None):
    doc = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "lights": NUM_LIGHTS}
    doc.update(extra or {})
    tmp = os.path.join(root, "manifest.json.tmp")
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
    os.replace(tmp, os.path.join(root, "manifest.json"))
    return doc


def read_manifest(root):
    with open(os.path.join(root, "manifest.json")) as f:
        doc = json.load(f)
    if doc.get("format") != DATASET_FORMAT:
        raise ValueError(f"{root}: not a dataset directory")
    if doc.get("version") != DATASET_VERSION:
        raise ValueError(f"{root}: unsupported dataset version {doc.get('version')}")
    return doc
