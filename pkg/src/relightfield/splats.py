"""Gaussian-splat scene containers and the light-conditioned appearance MLP.

Splat parameters are stored struct-of-arrays in float32: positions,
rotations (quaternions, normalized at use), log-scales, logit-opacities and
a learned feature vector per splat. Appearance comes from a 3-layer
width-128 MLP over (feature, SH-encoded view direction, SH-encoded world
light direction, per-image auxiliary latent) with ReLU hidden layers and a
sigmoid RGB output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .directions import SH_DIM

FEATURE_DIM = 32
LATENT_DIM = 128
MLP_HIDDEN = 128
MLP_INPUT = FEATURE_DIM + 2 * SH_DIM + LATENT_DIM


@dataclass
class AppearanceMLP:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @staticmethod
    def create(rng: np.random.Generator) -> "AppearanceMLP":
        def he(n_in, n_out, gain):
            return (rng.standard_normal((n_in, n_out)) * gain / np.sqrt(n_in)).astype(np.float32)

        return AppearanceMLP(
            w1=he(MLP_INPUT, MLP_HIDDEN, np.sqrt(2.0)),
            b1=np.zeros(MLP_HIDDEN, dtype=np.float32),
            w2=he(MLP_HIDDEN, MLP_HIDDEN, np.sqrt(2.0)),
            b2=np.zeros(MLP_HIDDEN, dtype=np.float32),
            w3=he(MLP_HIDDEN, 3, 1.0),
            b3=np.zeros(3, dtype=np.float32),
        )

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    def astype(self, dtype):
        return AppearanceMLP(**{k: v.astype(dtype) for k, v in self.params().items()})

    def forward(self, x, cache: bool = False):
        """x: (N, MLP_INPUT) -> RGB in (0,1)^3; optionally keep activations."""
        if x.shape[-1] != MLP_INPUT:
            raise ValueError(f"MLP input must have {MLP_INPUT} features, got {x.shape[-1]}")
        h1 = np.maximum(x @ self.w1 + self.b1, 0.0)
        h2 = np.maximum(h1 @ self.w2 + self.b2, 0.0)
        y = 1.0 / (1.0 + np.exp(-(h2 @ self.w3 + self.b3)))
        if cache:
            return y, (x, h1, h2, y)
        return y

    def backward(self, cached, dy):
        """Gradients of <dy, forward(x)> w.r.t. parameters and x."""
        x, h1, h2, y = cached
        dz3 = dy * y * (1.0 - y)
        dw3 = h2.T @ dz3
        db3 = dz3.sum(axis=0)
        dh2 = dz3 @ self.w3.T
        dz2 = dh2 * (h2 > 0.0)
        dw2 = h1.T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ self.w2.T
        dz1 = dh1 * (h1 > 0.0)
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        dx = dz1 @ self.w1.T
        grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3}
        return grads, dx


@dataclass(frozen=True)
class Splat:
    """Single-splat view into the scene arrays."""

    position: np.ndarray
    rotation: np.ndarray  # quaternion (w, x, y, z)
    log_scale: np.ndarray
    logit_opacity: float
    feature: np.ndarray


@dataclass(frozen=True)
class AuxLatent:
    view_id: str
    a: np.ndarray


@dataclass
class SplatScene:
    positions: np.ndarray  # (G, 3) float32, world
    quats: np.ndarray  # (G, 4) float32
    log_scales: np.ndarray  # (G, 3) float32
    logit_opacities: np.ndarray  # (G,) float32
    features: np.ndarray  # (G, FEATURE_DIM) float32
    mlp: AppearanceMLP
    latent_ids: list[str] = field(default_factory=list)
    latents: np.ndarray = field(default_factory=lambda: np.zeros((0, LATENT_DIM), dtype=np.float32))
    background: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        g = len(self.positions)
        if g < 1:
            raise ValueError("a scene needs at least one splat")
        shapes = {
            "positions": (g, 3),
            "quats": (g, 4),
            "log_scales": (g, 3),
            "logit_opacities": (g,),
            "features": (g, FEATURE_DIM),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr.shape != want:
                raise ValueError(f"{name}: expected shape {want}, got {arr.shape}")
        if len(self.latent_ids) != len(self.latents):
            raise ValueError("latent ids and latent rows disagree")
        if len(set(self.latent_ids)) != len(self.latent_ids):
            raise ValueError("latent view ids must be unique")
        if np.any(np.linalg.norm(self.quats, axis=1) < 1e-6):
            raise ValueError("degenerate quaternion")

    @property
    def splat_count(self) -> int:
        return len(self.positions)

    def splat(self, i: int) -> Splat:
        return Splat(
            position=self.positions[i].copy(),
            rotation=self.quats[i] / np.linalg.norm(self.quats[i]),
            log_scale=self.log_scales[i].copy(),
            logit_opacity=float(self.logit_opacities[i]),
            feature=self.features[i].copy(),
        )

    def latent_for(self, view_id: str) -> np.ndarray:
        idx = self.latent_ids.index(view_id)
        return self.latents[idx]

    def mean_latent(self) -> np.ndarray:
        """Inference latent: arithmetic mean of all training-view latents."""
        if len(self.latents) == 0:
            raise ValueError("scene has no latents")
        return self.latents.mean(axis=0)

    def keep(self, mask: np.ndarray) -> int:
        """Drop splats where mask is False; returns the number removed."""
        removed = int((~mask).sum())
        if removed:
            self.positions = self.positions[mask]
            self.quats = self.quats[mask]
            self.log_scales = self.log_scales[mask]
            self.logit_opacities = self.logit_opacities[mask]
            self.features = self.features[mask]
        return removed

    def bounds(self):
        return self.positions.min(axis=0), self.positions.max(axis=0)


def quat_to_rot(q):
    """Normalize quaternions (..., 4) (w,x,y,z) and build rotation matrices."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def init_scene_from_points(points, rng: np.random.Generator, view_ids=(),
                           background=(0.0, 0.0, 0.0), meta=None) -> SplatScene:
    """One splat per SfM point; scales from mean 3-NN distance; zero latents."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    g = len(pts)
    if g < 4:
        raise ValueError("need at least 4 points to seed a scene")
    tree = cKDTree(pts)
    # k=4: the first neighbor is the point itself
    dist, _ = tree.query(pts, k=4)
    nn = np.maximum(dist[:, 1:].mean(axis=1), 1e-6)
    quats = np.zeros((g, 4), dtype=np.float32)
    quats[:, 0] = 1.0
    return SplatScene(
        positions=pts.astype(np.float32),
        quats=quats,
        log_scales=np.log(nn)[:, None].repeat(3, axis=1).astype(np.float32),
        logit_opacities=np.full(g, np.log(0.1 / 0.9), dtype=np.float32),
        features=(rng.standard_normal((g, FEATURE_DIM)) * 0.1).astype(np.float32),
        mlp=AppearanceMLP.create(rng),
        latent_ids=list(view_ids),
        latents=np.zeros((len(view_ids), LATENT_DIM), dtype=np.float32),
        background=np.asarray(background, dtype=np.float32),
        meta=dict(meta or {}),
    )
