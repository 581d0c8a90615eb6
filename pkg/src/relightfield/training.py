"""Two-stage training: warmup on the capture, then multi-illumination fitting.

The warmup stage fits the original single-illumination images under the
reserved all-zero "unlit" light encoding. The main stage samples one
(view, light) pair per iteration from the augmented dataset; per-image
auxiliary latents are optimized in both stages. Before every forward pass,
splats that drifted inside the sampled camera's near-plane ("floaters") are
deleted. Loss is (1 - w) * L1 + w * D-SSIM with D-SSIM = (1 - SSIM) / 2.

The per-camera near plane comes from visible SfM depth: z_near =
0.9 x the 1st percentile (percentile position n*q, interpolated) of the
camera-space z of points projecting inside the image.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .datasets import NUM_LIGHTS, CameraPose, MultiLightDataset, MultiViewDataset
from .directions import sh_basis, unlit_encoding
from .errors import DivergenceError, InsufficientPointsError
from .metrics import ssim_with_grad
from .render import backward as render_backward
from .render import forward as render_forward
from .splats import SplatScene, init_scene_from_points

MIN_VISIBLE_POINTS = 10
ZNEAR_SCALE = 0.9
ZNEAR_PERCENTILE = 1.0


@dataclass
class TrainConfig:
    warmup_iters: int = 5000
    main_iters: int = 25000
    lr_positions: float = 1.6e-4  # multiplied by scene radius
    lr_rotations: float = 1e-3
    lr_scales: float = 5e-3
    lr_opacities: float = 5e-2
    lr_features: float = 2.5e-3
    lr_mlp: float = 1e-3
    lr_latents: float = 1e-3
    dssim_weight: float = 0.2
    overweight_view_ids: list = field(default_factory=list)
    seed: int = 0
    desk_scale: float = 1.0  # scales the iteration counts for small scenes
    checkpoint_every: int = 0
    checkpoint_path: str = ""

    def __post_init__(self):
        if self.warmup_iters < 0 or self.main_iters < 0:
            raise ValueError("iteration counts must be >= 0")
        if not 0.0 <= self.dssim_weight <= 1.0:
            raise ValueError("dssim_weight must be in [0, 1]")

    def scaled_iters(self):
        return (int(round(self.warmup_iters * self.desk_scale)),
                int(round(self.main_iters * self.desk_scale)))

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def from_json(path) -> "TrainConfig":
        with open(path) as f:
            return TrainConfig(**json.load(f))

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def _percentile_rank_nq(values, q_percent):
    """Percentile with position h = n*q (interpolated inverted CDF)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    h = n * (q_percent / 100.0)
    if h <= 1.0:
        return float(v[0])
    if h >= n:
        return float(v[-1])
    lo = int(np.floor(h))
    frac = h - lo
    return float(v[lo - 1] + frac * (v[lo] - v[lo - 1]))


def compute_znear(dataset: MultiViewDataset) -> dict:
    """Per-view near plane from the z of visible SfM points."""
    if dataset.sfm_points is None or len(dataset.sfm_points) == 0:
        raise InsufficientPointsError("dataset has no SfM points")
    table = {}
    for view in dataset.views:
        uv, z = view.pose.project(dataset.sfm_points)
        inside = (
            (z > 0)
            & (uv[:, 0] >= 0) & (uv[:, 0] < view.pose.width)
            & (uv[:, 1] >= 0) & (uv[:, 1] < view.pose.height)
        )
        if inside.sum() < MIN_VISIBLE_POINTS:
            raise InsufficientPointsError(
                f"view {view.id} sees {int(inside.sum())} points, needs {MIN_VISIBLE_POINTS}"
            )
        table[view.id] = ZNEAR_SCALE * _percentile_rank_nq(z[inside], ZNEAR_PERCENTILE)
    return table


def _floater_mask(scene: SplatScene, cam: CameraPose, z_near: float):
    uv, z = cam.project(scene.positions.astype(np.float64))
    return (
        (z > 0) & (z < z_near)
        & (uv[:, 0] >= 0) & (uv[:, 0] < cam.width)
        & (uv[:, 1] >= 0) & (uv[:, 1] < cam.height)
    )


def cull_floaters(scene: SplatScene, cam: CameraPose, z_near: float) -> int:
    """Delete in-frustum splats closer than z_near; returns removal count."""
    if z_near <= 0:
        raise ValueError("z_near must be positive")
    return scene.keep(~_floater_mask(scene, cam, z_near))


def infer_latent(scene: SplatScene) -> np.ndarray:
    """Inference-time latent: the mean over all training-view latents."""
    return scene.mean_latent()


class _Adam:
    def __init__(self, shape, lr):
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)
        self.t = 0
        self.lr = lr

    def step(self, grad):
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * grad
        self.v = 0.999 * self.v + 0.001 * grad * grad
        mhat = self.m / (1.0 - 0.9**self.t)
        vhat = self.v / (1.0 - 0.999**self.t)
        return (self.lr * mhat / (np.sqrt(vhat) + 1e-8)).astype(np.float64)

    def keep(self, mask):
        self.m = self.m[mask]
        self.v = self.v[mask]


class _Trainer:
    PER_SPLAT = ("positions", "quats", "log_scales", "logit_opacities", "features")

    def __init__(self, scene: SplatScene, cfg: TrainConfig, scene_radius: float):
        self.scene = scene
        self.cfg = cfg
        self.opt = {
            "positions": _Adam(scene.positions.shape, cfg.lr_positions * scene_radius),
            "quats": _Adam(scene.quats.shape, cfg.lr_rotations),
            "log_scales": _Adam(scene.log_scales.shape, cfg.lr_scales),
            "logit_opacities": _Adam(scene.logit_opacities.shape, cfg.lr_opacities),
            "features": _Adam(scene.features.shape, cfg.lr_features),
            "latents": _Adam(scene.latents.shape, cfg.lr_latents),
        }
        self.opt_mlp = {k: _Adam(v.shape, cfg.lr_mlp) for k, v in scene.mlp.params().items()}

    def cull(self, cam, z_near):
        doomed = _floater_mask(self.scene, cam, z_near)
        if doomed.any():
            keep = ~doomed
            self.scene.keep(keep)
            for name in self.PER_SPLAT:
                self.opt[name].keep(keep)

    def step(self, cam, light_enc, target, latent_row: int):
        scene, cfg = self.scene, self.cfg
        latent = scene.latents[latent_row].astype(np.float64)
        out, cache = render_forward(scene, cam, light_enc, latent, with_cache=True)
        color = out.color
        n = color.size
        diff = color - target
        l1 = float(np.abs(diff).mean())
        adjoint = (1.0 - cfg.dssim_weight) * np.sign(diff) / n
        loss = (1.0 - cfg.dssim_weight) * l1
        if cfg.dssim_weight > 0.0:
            ssim_val, ssim_grad = ssim_with_grad(color, target)
            loss += cfg.dssim_weight * 0.5 * (1.0 - ssim_val)
            adjoint -= cfg.dssim_weight * 0.5 * ssim_grad
        grads = render_backward(cache, adjoint)

        for name in self.PER_SPLAT:
            arr = getattr(scene, name)
            upd = self.opt[name].step(getattr(grads, name))
            setattr(scene, name, (arr.astype(np.float64) - upd).astype(arr.dtype))
        lat_grad = np.zeros_like(scene.latents, dtype=np.float64)
        lat_grad[latent_row] = grads.latent
        scene.latents = (scene.latents.astype(np.float64) - self.opt["latents"].step(lat_grad)).astype(np.float32)
        for k, opt in self.opt_mlp.items():
            arr = getattr(scene.mlp, k)
            setattr(scene.mlp, k, (arr.astype(np.float64) - opt.step(grads.mlp[k])).astype(arr.dtype))
        return loss


def train(dataset: MultiLightDataset, cfg: TrainConfig, on_iteration=None) -> SplatScene:
    """Optimize a relightable scene against an augmented capture."""
    dataset.validate()
    base = dataset.base
    rng = np.random.default_rng(cfg.seed)

    center = np.asarray(base.meta.get("center", base.sfm_points.mean(axis=0)), dtype=np.float64)
    radius = float(base.meta.get("radius", 0.0))
    if radius <= 0.0:
        spans = base.sfm_points.max(axis=0) - base.sfm_points.min(axis=0)
        radius = float(max(np.linalg.norm(spans) / 2.0, 1e-6))

    view_ids = [v.id for v in base.views]
    scene = init_scene_from_points(base.sfm_points, rng, view_ids=view_ids)
    znear = compute_znear(base)
    trainer = _Trainer(scene, cfg, radius)

    views_by_id = {v.id: v for v in base.views}
    light_encs = {
        key: sh_basis(d) for key, d in dataset.light_dirs_world.items()
    }
    overweight = [v for v in cfg.overweight_view_ids if v in views_by_id]

    warmup_iters, main_iters = cfg.scaled_iters()
    unlit = unlit_encoding()

    for it in range(1, warmup_iters + 1):
        vid = view_ids[int(rng.integers(len(view_ids)))]
        view = views_by_id[vid]
        trainer.cull(view.pose, znear[vid])
        loss = trainer.step(view.pose, unlit, view.image, view_ids.index(vid))
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at warmup iteration {it}")
        if on_iteration:
            on_iteration("warmup", it, loss)
        _maybe_checkpoint(scene, cfg, it)

    for it in range(1, main_iters + 1):
        if overweight and it % 3 == 0:
            vid = overweight[int(rng.integers(len(overweight)))]
        else:
            vid = view_ids[int(rng.integers(len(view_ids)))]
        k = int(rng.integers(NUM_LIGHTS))
        view = views_by_id[vid]
        trainer.cull(view.pose, znear[vid])
        loss = trainer.step(view.pose, light_encs[(vid, k)], dataset.relit[(vid, k)],
                            view_ids.index(vid))
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at main iteration {it}")
        if on_iteration:
            on_iteration("main", it, loss)
        _maybe_checkpoint(scene, cfg, warmup_iters + it)

    first_pose = base.views[0].pose
    scene.meta.update(
        {
            "version": 1,
            "scene_radius": radius,
            "scene_center": [float(c) for c in center],
            "light_dirs_camera": [[float(c) for c in row] for row in dataset.light_dirs_camera],
            "lightdirs_hash": hashlib.sha256(
                np.ascontiguousarray(dataset.light_dirs_camera, dtype="<f8").tobytes()
            ).hexdigest()[:16],
            "config_hash": cfg.hash(),
            "unlit_available": warmup_iters > 0,
            "default_camera": {
                "position": [float(c) for c in first_pose.position],
                "target": [float(c) for c in center],
                "up": [float(c) for c in first_pose.rotation.m[:, 1]],
                "fov_deg": float(np.degrees(2.0 * np.arctan(first_pose.width / (2.0 * first_pose.fx)))),
            },
        }
    )
    return scene


def _maybe_checkpoint(scene, cfg, global_it):
    if cfg.checkpoint_every > 0 and cfg.checkpoint_path and global_it % cfg.checkpoint_every == 0:
        from .scenefile import save_scene

        save_scene(scene, cfg.checkpoint_path)
